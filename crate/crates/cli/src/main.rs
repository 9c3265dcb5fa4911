fn main() {
    std::process::exit(dtemt_cli::run(std::env::args_os()));
}
