mod args;
mod commands;
mod common;

use args::{parse_args, CliError, USAGE};

fn run() -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let parsed = parse_args(&argv)?;
    match parsed.command.as_str() {
        "synth" => commands::cmd_synth(&parsed),
        "train" => commands::cmd_train(&parsed),
        "describe" => commands::cmd_describe(&parsed),
        "localize" => commands::cmd_localize(&parsed),
        "attention" => commands::cmd_attention(&parsed),
        "evaluate" => commands::cmd_evaluate(&parsed),
        "selftest" => commands::cmd_selftest(&parsed),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn main() {
    match run() {
        Ok(()) => {}
        Err(e) => {
            eprintln!("segloc: {}", e.message());
            if matches!(e, CliError::Usage(_)) {
                eprintln!("\n{USAGE}");
            }
            std::process::exit(e.exit_code());
        }
    }
}
