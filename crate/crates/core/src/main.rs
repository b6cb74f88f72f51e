fn main() {
    std::process::exit(millsense::cli::run(std::env::args_os()));
}
