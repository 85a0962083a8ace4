fn main() {
    std::process::exit(sbpcht::cli::main_with_args(std::env::args_os()));
}
