fn main() {
    std::process::exit(inertia_cli::main_exit());
}
