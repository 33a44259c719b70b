fn main() {
    std::process::exit(squeezesim::cli::run(std::env::args_os()));
}
