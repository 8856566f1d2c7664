fn main() {
    std::process::exit(nrr_cli::run(std::env::args_os()));
}
