fn main() {
    std::process::exit(promptvet::cli::dispatch(std::env::args_os()));
}
