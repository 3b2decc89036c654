fn main() {
    std::process::exit(revla_core::cli::run());
}
