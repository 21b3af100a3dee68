fn main() {
    std::process::exit(cavobs_cli::run(std::env::args_os()));
}
