fn main() {
    std::process::exit(cvop::cli::run(std::env::args_os()));
}
