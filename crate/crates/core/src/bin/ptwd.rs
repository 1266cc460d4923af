use std::process::ExitCode;

fn main() -> ExitCode {
    ptwd::cli::main_with_args(std::env::args_os())
}
