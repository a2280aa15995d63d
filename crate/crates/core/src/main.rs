use std::process::ExitCode;

use coevo::cli::{execute, parse_config, CliError};

fn main() -> ExitCode {
    let result = parse_config(std::env::args_os()).and_then(|cfg| execute(&cfg));
    match result {
        Ok(written) => {
            for path in written {
                println!("{}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Clap(e)) => {
            let code = e.exit_code();
            let _ = e.print();
            ExitCode::from(code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
