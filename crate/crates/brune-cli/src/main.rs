fn main() {
    std::process::exit(brune_cli::run(std::env::args_os()));
}
