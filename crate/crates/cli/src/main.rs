fn main() {
    std::process::exit(hetnav_cli::run(std::env::args_os()));
}
