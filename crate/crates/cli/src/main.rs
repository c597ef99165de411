fn main() {
    std::process::exit(agrodw_cli::run(std::env::args().collect()));
}
