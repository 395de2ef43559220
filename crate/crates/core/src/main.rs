fn main() {
    std::process::exit(vcselect::cli::run(std::env::args_os()));
}
