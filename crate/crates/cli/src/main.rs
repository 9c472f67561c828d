fn main() {
    std::process::exit(tablescope_cli::run(std::env::args_os()));
}
