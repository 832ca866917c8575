use std::io::{self, Write};
use std::panic;
use std::process::ExitCode;

fn main() -> ExitCode {
    let result = panic::catch_unwind(|| {
        let stdout = io::stdout();
        let stderr = io::stderr();
        let mut out = io::BufWriter::new(stdout.lock());
        let code = cosetsle_cli::run(std::env::args_os(), &mut out, &mut stderr.lock());
        if out.flush().is_err() {
            return 1;
        }
        code
    });
    // A panic has already printed its message; report it as internal.
    ExitCode::from(result.unwrap_or(1) as u8)
}
