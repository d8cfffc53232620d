fn main() {
    std::process::exit(fdx::cli::run(std::env::args_os()));
}
