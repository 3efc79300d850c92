fn main() {
    std::process::exit(jprc_cli::main_with_args(std::env::args_os()));
}
