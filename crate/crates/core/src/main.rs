fn main() {
    std::process::exit(enhp::cli::main_with_args(std::env::args_os()));
}
