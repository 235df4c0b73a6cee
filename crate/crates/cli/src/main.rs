fn main() {
    std::process::exit(smilegan_cli::run(std::env::args_os()));
}
