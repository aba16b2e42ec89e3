fn main() {
    std::process::exit(puretone::cli::main_with_args(std::env::args_os()));
}
