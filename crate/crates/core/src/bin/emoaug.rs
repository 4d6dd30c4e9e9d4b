use std::process::ExitCode;

fn main() -> ExitCode {
    emoaugnet::cli::main_from(std::env::args_os())
}
