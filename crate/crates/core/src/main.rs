fn main() {
    std::process::exit(cbgru::cli::main_with_args(std::env::args_os()));
}
