fn main() {
    std::process::exit(carmen::cli::run(std::env::args_os()));
}
