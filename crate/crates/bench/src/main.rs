fn main() {
    std::process::exit(gcopt::cli::main(std::env::args_os()));
}
