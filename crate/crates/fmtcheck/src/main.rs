fn main() {
    std::process::exit(fmtcheck::cli::run());
}
