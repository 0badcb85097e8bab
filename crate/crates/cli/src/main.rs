fn main() {
    std::process::exit(ratelqg_cli::run(std::env::args_os()));
}
