fn main() {
    std::process::exit(farm_cli::main_with_args(std::env::args_os()));
}
