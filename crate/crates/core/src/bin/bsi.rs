fn main() {
    std::process::exit(bsi::cli::main_with_args(std::env::args_os()));
}
