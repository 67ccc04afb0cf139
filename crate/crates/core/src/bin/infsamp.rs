fn main() {
    std::process::exit(infsamp::cli::main_with_args(std::env::args_os()));
}
