fn main() {
    std::process::exit(pklab::cli::main_with_args(std::env::args_os()));
}
