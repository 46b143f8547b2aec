fn main() {
    std::process::exit(eventmap::cli::run(std::env::args_os()));
}
