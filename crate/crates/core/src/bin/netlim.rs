use std::process::ExitCode;

fn main() -> ExitCode {
    netlim::cli::main_with_args(std::env::args_os())
}
