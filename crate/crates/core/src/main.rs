fn main() {
    std::process::exit(metriplex::cli::run(std::env::args_os()));
}
