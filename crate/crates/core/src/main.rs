fn main() {
    std::process::exit(heatlab::cli::run());
}
