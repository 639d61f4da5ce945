fn main() {
    std::process::exit(stockdecode::cli::run(std::env::args_os().collect()));
}
