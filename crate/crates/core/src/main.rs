fn main() {
    std::process::exit(domrand::cli::run(std::env::args_os()));
}
