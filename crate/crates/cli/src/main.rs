fn main() {
    std::process::exit(biosession_cli::app::main_with_args(std::env::args_os()));
}
