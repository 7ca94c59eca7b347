fn main() {
    std::process::exit(agr_harness::cli::run(std::env::args_os()));
}
