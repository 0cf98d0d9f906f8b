fn main() {
    std::process::exit(framelens::cli::run(std::env::args_os()));
}
