use std::process::exit;

use clap::Parser;

fn main() {
    let cli = match fairmatch_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout with success; real usage errors
            // go to stderr with exit code 1
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            exit(code);
        }
    };
    if let Err(err) = fairmatch_cli::run(cli) {
        eprintln!("error: {err}");
        exit(err.exit_code());
    }
}
