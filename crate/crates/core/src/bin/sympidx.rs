fn main() {
    std::process::exit(symplectic_index::cli::main_from_env());
}
