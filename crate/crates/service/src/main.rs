fn main() {
    std::process::exit(thematic_service::cli::main_with_args(std::env::args_os()));
}
