fn main() {
    std::process::exit(otc::cli::cli_main(std::env::args_os()));
}
