fn main() {
    std::process::exit(vmc_core::cli::run(std::env::args_os()));
}
