fn main() {
    std::process::exit(hgprompt::cli::main_with_args(std::env::args_os()));
}
