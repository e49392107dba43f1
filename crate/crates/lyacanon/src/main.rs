fn main() {
    std::process::exit(lyacanon::cli::run_from_env());
}
