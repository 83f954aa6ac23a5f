fn main() {
    std::process::exit(matern_cardinal::cli::run(std::env::args_os()));
}
