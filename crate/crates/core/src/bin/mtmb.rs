fn main() {
    std::process::exit(mtmb::cli::dispatch(std::env::args_os()));
}
