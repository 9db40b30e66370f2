fn main() {
    std::process::exit(aads::cli::run_from_env());
}
