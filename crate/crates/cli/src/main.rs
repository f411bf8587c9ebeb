fn main() {
    std::process::exit(potlab_cli::run_command(std::env::args_os()));
}
