fn main() {
    std::process::exit(sirsens::cli::main_with_args(std::env::args_os()));
}
