fn main() {
    std::process::exit(appl::run_cli());
}
