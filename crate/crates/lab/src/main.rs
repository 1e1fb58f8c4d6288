use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use langevin_lab::commands::{self, Command};
use langevin_lab::config::load_config_with;
use langevin_lab::output::Outputs;
use langevin_lab::LabError;
use serde_json::json;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Certify,
    Lsi,
    Plan,
    Sample,
    Verify,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Certify => Command::Certify,
            Cmd::Lsi => Command::Lsi,
            Cmd::Plan => Command::Plan,
            Cmd::Sample => Command::Sample,
            Cmd::Verify => Command::Verify,
        }
    }
}

/// Certified step-size planning and verification for unadjusted Langevin Monte Carlo.
#[derive(Debug, Parser)]
#[command(name = "langevin-lab", version)]
struct Cli {
    command: Cmd,
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// `key=value` applied after the file is read; repeatable.
    #[arg(long = "override")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command: Command = cli.command.into();
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = match load_config_with(&cli.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            // Without a config the only known destination is `--out`.
            if let Some(dir) = &cli.out {
                if let Ok(mut out) = Outputs::create(dir) {
                    record_failure(&mut out, command, &e);
                }
            }
            return fail(&e, Some(command));
        }
    };
    if let Some(dir) = cli.out {
        cfg.out_dir = dir;
    }
    let mut out = match Outputs::create(&cfg.out_dir) {
        Ok(o) => o,
        Err(e) => return fail(&e, None),
    };
    let result = commands::run(command, &cfg, &mut out);
    if let Err(e) = &result {
        record_failure(&mut out, command, e);
    }
    let hash = cfg.hash();
    if let Err(e) = out.finish(command.name(), hash, cfg.seed) {
        eprintln!("error: could not write manifest: {e}");
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e, Some(command)),
    }
}

fn record_failure(out: &mut Outputs, command: Command, e: &LabError) {
    let record = json!({
        "command": command.name(),
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "error": e.to_string(),
    });
    if let Err(w) = out.write_json("failure.json", &record) {
        eprintln!("error: could not write failure record: {w}");
    }
}

fn fail(e: &LabError, command: Option<Command>) -> ExitCode {
    match command {
        Some(c) => eprintln!("error: {}: {e}", c.name()),
        None => eprintln!("error: {e}"),
    }
    ExitCode::from(e.exit_code() as u8)
}
