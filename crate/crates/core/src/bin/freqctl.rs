fn main() {
    std::process::exit(freqctl::cli::main_with_args(std::env::args_os()));
}
