fn main() {
    std::process::exit(rarebayes::cli::main_with_args(std::env::args_os()));
}
