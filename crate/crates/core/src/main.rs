fn main() {
    std::process::exit(tempbev::cli::run(std::env::args_os()));
}
