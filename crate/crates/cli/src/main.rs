use clap::Parser;
use shapeflow_cli::{run, Cli};
use shapeflow_core::error::Error;

/// Exit codes: 0 success, 2 validation, 3 numeric failure, 4 I/O.
fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Format(_) => 2,
        Error::Numeric(_) => 3,
        Error::Io(_) => 4,
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        let class = match err {
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Numeric(_) => "numeric",
            Error::Io(_) => "io",
        };
        // single machine-parsable line
        let message = err.to_string().replace('\n', "; ");
        eprintln!("error:{class}:{message}");
        std::process::exit(exit_code(&err));
    }
}
