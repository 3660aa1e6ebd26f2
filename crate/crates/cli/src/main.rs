fn main() {
    std::process::exit(switchpdmp_cli::main_with_args(std::env::args_os()));
}
