fn main() {
    std::process::exit(dadast::harness::cli::main_with_args(std::env::args_os()));
}
