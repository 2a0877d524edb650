fn main() {
    std::process::exit(mgct::cli::main());
}
