use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(rlsr::cli::run(std::env::args_os()) as u8)
}
