fn main() {
    std::process::exit(resaware_cli::run(std::env::args_os()));
}
