fn main() {
    std::process::exit(vtcc::cli::main_with_args(std::env::args_os()));
}
