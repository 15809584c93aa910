fn main() {
    std::process::exit(abcstar::cli::run(std::env::args_os()));
}
