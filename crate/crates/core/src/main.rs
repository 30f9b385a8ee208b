fn main() {
    std::process::exit(fedlkd::harness::run_cli(std::env::args_os()));
}
