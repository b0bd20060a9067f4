fn main() {
    std::process::exit(odmr_cli::run_from_args(std::env::args_os()));
}
