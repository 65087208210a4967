fn main() {
    std::process::exit(idiolens_cli::run(std::env::args_os()));
}
