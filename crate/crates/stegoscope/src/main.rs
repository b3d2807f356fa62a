fn main() {
    std::process::exit(stegoscope::cli::run(std::env::args_os()));
}
