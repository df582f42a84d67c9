fn main() {
    std::process::exit(rfpe::cli::main());
}
