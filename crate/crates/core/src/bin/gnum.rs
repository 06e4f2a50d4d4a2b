fn main() {
    std::process::exit(gnum::cli::run(std::env::args_os()));
}
