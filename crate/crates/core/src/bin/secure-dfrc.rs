fn main() {
    std::process::exit(secure_dfrc::cli::run(std::env::args_os()));
}
