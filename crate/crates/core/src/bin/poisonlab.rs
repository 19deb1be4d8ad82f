fn main() {
    std::process::exit(poisonlab::cli::main_with_args(std::env::args_os()));
}
