fn main() {
    std::process::exit(bdma::cli::dispatch(std::env::args_os()));
}
