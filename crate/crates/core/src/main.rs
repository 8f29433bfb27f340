fn main() {
    std::process::exit(keyfuse::cli::run(std::env::args_os()));
}
