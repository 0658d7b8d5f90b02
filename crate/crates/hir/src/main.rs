use std::process::ExitCode;

fn main() -> ExitCode {
    hir::cli::run()
}
