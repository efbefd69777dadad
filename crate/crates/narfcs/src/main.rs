fn main() {
    std::process::exit(narfcs::cli::main_entry());
}
