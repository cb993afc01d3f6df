fn main() {
    std::process::exit(prion_lab::cli::run(std::env::args_os()));
}
