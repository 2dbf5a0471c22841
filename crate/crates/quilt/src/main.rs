fn main() {
    std::process::exit(quilt::cli::run(std::env::args_os()));
}
