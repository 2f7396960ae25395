fn main() {
    std::process::exit(ssadr::cli::run());
}
