fn main() {
    std::process::exit(mcmr::cli::run(std::env::args_os()));
}
