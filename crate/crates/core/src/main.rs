fn main() {
    std::process::exit(windowtrack::cli::main_with_args(std::env::args_os()));
}
