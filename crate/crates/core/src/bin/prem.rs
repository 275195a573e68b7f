fn main() {
    std::process::exit(prem::cli::run(std::env::args_os()));
}
