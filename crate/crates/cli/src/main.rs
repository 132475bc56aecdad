use std::process::ExitCode;

use clap::Parser;
use spikescan_cli::args::Command;
use spikescan_cli::{execute, init_threads, Status};

#[derive(Parser)]
#[command(name = "spikescan", version, about = "Dynamic-decay spiking neuron experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| execute(&cli.command));
    match result {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if let Some(m) = &outcome.manifest {
                println!("manifest: {}", m.display());
            }
            match &outcome.status {
                Status::Ok => {}
                Status::Unexpected(msg) => eprintln!("unexpected outcome: {msg}"),
                Status::LengthMismatch(msg) => eprintln!("length mismatch: {msg}"),
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
