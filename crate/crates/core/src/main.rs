fn main() {
    env_logger::init();
    std::process::exit(sre_falsify::cli::main_with(std::env::args()));
}
