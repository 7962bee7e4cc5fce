fn main() {
    std::process::exit(dcot::cli::main_with_args(std::env::args_os()));
}
