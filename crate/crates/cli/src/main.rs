use std::process::ExitCode;

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match irk_precond_cli::run(std::env::args_os(), &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ irk_precond_cli::CliError::Usage(_)) => {
            eprint!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("irk-precond: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
