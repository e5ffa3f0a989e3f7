fn main() {
    std::process::exit(mrs_core::cli::main_with_args(std::env::args_os()));
}
