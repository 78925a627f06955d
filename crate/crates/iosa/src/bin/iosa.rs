fn main() {
    std::process::exit(iosa::cli::run());
}
