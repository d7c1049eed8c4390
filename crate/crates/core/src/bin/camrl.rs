fn main() {
    std::process::exit(camrl::cli::run(std::env::args_os()));
}
