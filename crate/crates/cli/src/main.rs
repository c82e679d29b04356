fn main() {
    std::process::exit(equirl_cli::run(std::env::args_os()));
}
