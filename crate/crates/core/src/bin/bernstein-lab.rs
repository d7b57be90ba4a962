fn main() {
    std::process::exit(bernstein_lab_core::cli::main_with_args(std::env::args_os()));
}
