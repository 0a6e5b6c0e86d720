fn main() -> std::process::ExitCode {
    retouch_service::cli::main_with_args(std::env::args_os())
}
