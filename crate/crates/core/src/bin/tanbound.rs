fn main() {
    std::process::exit(tanbound::cli::run(std::env::args_os()));
}
