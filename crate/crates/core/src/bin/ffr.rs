fn main() {
    std::process::exit(ffr::cli::run(std::env::args_os()));
}
