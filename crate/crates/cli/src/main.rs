fn main() {
    std::process::exit(multiaxis_cli::app::run(std::env::args_os()));
}
