use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(blowsim::cli::run())
}
