fn main() {
    std::process::exit(tvam_core::cli::main_with_args(std::env::args_os()));
}
