fn main() {
    std::process::exit(lapsekit_cli::run(std::env::args_os()));
}
