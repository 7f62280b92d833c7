fn main() {
    std::process::exit(hazeclear::cli::run(std::env::args_os()));
}
