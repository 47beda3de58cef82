fn main() {
    std::process::exit(abelfuchs::cli::run_from_env());
}
