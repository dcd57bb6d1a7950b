use std::panic;
use std::process;

use ksnbc::harness::{cli, ExitCode};

fn main() {
    let code = panic::catch_unwind(|| cli(std::env::args_os())).unwrap_or(ExitCode::Error);
    process::exit(code.code());
}
