use std::process::ExitCode;

fn main() -> ExitCode {
    polyspectra::cli::main_entry()
}
