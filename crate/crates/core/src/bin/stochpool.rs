fn main() {
    std::process::exit(stochpool::cli::run(std::env::args_os()));
}
