fn main() {
    std::process::exit(swolca::cli::run(std::env::args_os()));
}
