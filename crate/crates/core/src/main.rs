fn main() {
    env_logger::init();
    std::process::exit(tensor_sr::cli::run());
}
