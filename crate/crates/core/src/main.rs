fn main() {
    std::process::exit(sinedelta::cli::run());
}
