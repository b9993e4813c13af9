fn main() {
    std::process::exit(flimp::cli::main_with_args(std::env::args_os()));
}
