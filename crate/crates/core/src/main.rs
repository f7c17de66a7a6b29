fn main() {
    std::process::exit(emdm::cli::run(std::env::args_os()));
}
