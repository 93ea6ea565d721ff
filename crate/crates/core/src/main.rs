fn main() {
    std::process::exit(genclass::harness::cli(std::env::args().collect()));
}
