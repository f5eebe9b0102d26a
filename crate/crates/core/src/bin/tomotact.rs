fn main() {
    std::process::exit(tomotact::cli::run(std::env::args_os()));
}
