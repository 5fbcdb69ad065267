fn main() {
    std::process::exit(fvlab_cli::run(std::env::args_os()));
}
