fn main() {
    std::process::exit(rampcast_cli::run());
}
