fn main() -> std::process::ExitCode {
    slg_cli::run(std::env::args_os())
}
