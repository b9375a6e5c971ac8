fn main() {
    std::process::exit(flowcast::cli::run(std::env::args_os()));
}
