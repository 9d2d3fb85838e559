fn main() {
    std::process::exit(bcp_nbi::cli::main_with_args(std::env::args_os()));
}
