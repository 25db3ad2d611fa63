fn main() {
    std::process::exit(slicesim_cli::main_with_args(std::env::args_os()));
}
