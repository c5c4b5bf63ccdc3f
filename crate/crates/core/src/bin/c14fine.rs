fn main() {
    std::process::exit(c14fine::cli::run(std::env::args_os()));
}
