fn main() {
    let args: Vec<String> = std::env::args().collect();
    std::process::exit(qmc_cli::run(args));
}
