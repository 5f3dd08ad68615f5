fn main() {
    std::process::exit(superscar::cli::run_from(std::env::args_os()));
}
