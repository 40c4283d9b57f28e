fn main() {
    std::process::exit(planvec_cli::run(std::env::args_os()));
}
