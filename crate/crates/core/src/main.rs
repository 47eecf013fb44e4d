fn main() {
    std::process::exit(beta_dereverb::cli::run(std::env::args_os()));
}
