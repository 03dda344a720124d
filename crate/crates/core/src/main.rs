fn main() {
    std::process::exit(hooklens::cli::main_with_args(std::env::args_os()));
}
