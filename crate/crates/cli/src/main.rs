fn main() {
    std::process::exit(gridres_cli::run(std::env::args_os()));
}
