use std::process::ExitCode;

fn main() -> ExitCode {
    palmcode::cli::main_with_args(std::env::args_os())
}
