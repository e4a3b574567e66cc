fn main() {
    std::process::exit(gap_cli::run(std::env::args_os()));
}
