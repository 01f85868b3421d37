fn main() {
    std::process::exit(sort3lab::cli::main().code());
}
