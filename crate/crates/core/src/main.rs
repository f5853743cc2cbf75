use std::process::ExitCode;

fn main() -> ExitCode {
    semcache::cli::main_with_args(std::env::args_os())
}
