fn main() {
    std::process::exit(switchpde::cli::run_main());
}
