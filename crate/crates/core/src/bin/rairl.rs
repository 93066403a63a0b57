fn main() {
    rairl::cli::init_logging();
    std::process::exit(rairl::cli::run(std::env::args_os()));
}
