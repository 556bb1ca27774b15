fn main() {
    std::process::exit(iclabel_cli::main_with_args(std::env::args_os()));
}
