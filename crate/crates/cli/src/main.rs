fn main() {
    std::process::exit(semieff_cli::run(std::env::args().collect()));
}
