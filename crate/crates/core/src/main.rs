fn main() {
    std::process::exit(onsager_lab::cli::main_with(std::env::args_os()));
}
