fn main() {
    std::process::exit(lime_cli::run(std::env::args_os()));
}
