fn main() {
    std::process::exit(pcomp::cli::cli_main(std::env::args_os()));
}
