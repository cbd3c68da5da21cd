fn main() {
    std::process::exit(parisian_dividends::cli::run(std::env::args_os()));
}
