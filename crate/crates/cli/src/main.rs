fn main() {
    std::process::exit(snakelab_cli::run(std::env::args_os()));
}
