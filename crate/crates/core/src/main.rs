fn main() {
    std::process::exit(hllkit::cli::run());
}
