use std::process::ExitCode;

fn main() -> ExitCode {
    match phasegi_cli::run(std::env::args_os()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(phasegi_cli::CliError::Usage(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("phasegi: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
