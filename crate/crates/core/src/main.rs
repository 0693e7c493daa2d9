fn main() {
    std::process::exit(spectral_ends::cli::run(std::env::args_os()));
}
