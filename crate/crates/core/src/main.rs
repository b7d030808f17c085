fn main() {
    std::process::exit(bicforge::cli::main_with(std::env::args_os()));
}
