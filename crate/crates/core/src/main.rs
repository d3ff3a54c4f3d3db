fn main() {
    std::process::exit(pbsteric::cli::main_with(std::env::args_os()));
}
