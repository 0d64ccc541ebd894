fn main() {
    std::process::exit(gridsurrogate::cli::main_with_args(std::env::args_os()));
}
