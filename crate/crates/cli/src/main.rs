fn main() {
    std::process::exit(schouten_cli::run(std::env::args_os()));
}
