fn main() {
    std::process::exit(ghm_tsa::cli::main_from_env());
}
