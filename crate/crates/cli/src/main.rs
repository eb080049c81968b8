fn main() {
    std::process::exit(subrosa_cli::app::main_with(std::env::args_os()));
}
