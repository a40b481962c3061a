use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = filterlab::cli::configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    let code = filterlab::cli::run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
