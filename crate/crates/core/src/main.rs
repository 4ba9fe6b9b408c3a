fn main() {
    std::process::exit(cvtomo::cli::main_with_args(std::env::args_os()));
}
