fn main() {
    std::process::exit(dpsketch_cli::main_with(std::env::args_os()));
}
