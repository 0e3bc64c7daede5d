fn main() {
    std::process::exit(liftline::cli::run(std::env::args_os()));
}
