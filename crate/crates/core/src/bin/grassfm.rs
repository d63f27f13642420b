fn main() {
    std::process::exit(grassfm::cli::run_cli(std::env::args_os()));
}
