fn main() {
    std::process::exit(simrobust::cli::run(std::env::args_os()));
}
