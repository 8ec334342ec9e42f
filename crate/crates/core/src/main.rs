fn main() {
    std::process::exit(chemostat::cli::run());
}
