fn main() {
    std::process::exit(twogroup::cli::cli_main(std::env::args_os()));
}
