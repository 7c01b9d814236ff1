fn main() {
    std::process::exit(chad::cli::run_cli(std::env::args_os()));
}
