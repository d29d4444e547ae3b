fn main() {
    std::process::exit(mcseg_cli::main_with_args(std::env::args_os()));
}
