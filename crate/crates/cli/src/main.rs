fn main() {
    std::process::exit(eadkit_cli::run(std::env::args_os()));
}
