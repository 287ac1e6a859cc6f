use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(untangle_cli::run(std::env::args_os()))
}
