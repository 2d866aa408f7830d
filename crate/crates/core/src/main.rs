fn main() {
    std::process::exit(explain_reduce::cli::run(std::env::args_os()));
}
