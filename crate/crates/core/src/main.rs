fn main() {
    std::process::exit(verbalize::cli::run());
}
