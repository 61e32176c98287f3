fn main() {
    std::process::exit(nme_cli::run(std::env::args_os()));
}
