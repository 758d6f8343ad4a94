fn main() {
    std::process::exit(wittenlab_cli::main_with_args(std::env::args_os()));
}
