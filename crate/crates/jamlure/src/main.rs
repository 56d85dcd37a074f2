use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(jamlure::cli::run(std::env::args_os()))
}
