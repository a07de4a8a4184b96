fn main() {
    std::process::exit(cxreval_cli::run(std::env::args_os()));
}
