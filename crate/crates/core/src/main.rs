fn main() {
    std::process::exit(tvfbe::cli::main_with_args(std::env::args_os()));
}
