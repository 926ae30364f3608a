fn main() {
    std::process::exit(phdyn::cli::main());
}
