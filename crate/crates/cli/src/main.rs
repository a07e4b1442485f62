mod args;
mod commands;
mod config_file;
mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{Failure, Outcome};
use manifest::RunManifest;

const SUBCOMMANDS: &[&str] = &[
    "laplace-check",
    "thresholds",
    "curves",
    "identity-suite",
    "majorant",
    "integrated-mc",
    "replay",
];

fn name_of(cmd: &Command) -> &'static str {
    match cmd {
        Command::LaplaceCheck(_) => "laplace-check",
        Command::Thresholds(_) => "thresholds",
        Command::Curves(_) => "curves",
        Command::IdentitySuite(_) => "identity-suite",
        Command::Majorant(_) => "majorant",
        Command::IntegratedMc(_) => "integrated-mc",
        Command::Replay { .. } => "replay",
    }
}

fn dispatch(cmd: &Command) -> Result<Outcome, Failure> {
    match cmd {
        Command::LaplaceCheck(a) => commands::laplace_check(a),
        Command::Thresholds(a) => commands::thresholds(a),
        Command::Curves(a) => commands::curves(a),
        Command::IdentitySuite(a) => commands::identity_suite(a),
        Command::Majorant(a) => commands::majorant(a),
        Command::IntegratedMc(a) => commands::integrated_mc(a),
        Command::Replay { .. } => unreachable!("replay is resolved before dispatch"),
    }
}

fn write_to(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn manifest_path(cli: &Cli) -> Option<PathBuf> {
    cli.manifest.clone().or_else(|| {
        cli.out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let replayed;
    let command = match &cli.command {
        Command::Replay { manifest_file } => {
            let text = fs::read_to_string(manifest_file).map_err(|e| {
                Failure::Config(format!("cannot read {}: {e}", manifest_file.display()))
            })?;
            let m: RunManifest = serde_json::from_str(&text)
                .map_err(|e| Failure::Config(format!("bad manifest: {e}")))?;
            let argv = std::iter::once("sheetstop".to_string()).chain(m.argv());
            replayed = Cli::try_parse_from(argv).map_err(|e| Failure::Config(e.to_string()))?;
            &replayed.command
        }
        c => c,
    };
    let outcome = dispatch(command)?;
    write_to(cli.out.as_deref(), &outcome.body)?;
    if let Some((path, doc)) = &outcome.summary {
        match path {
            Some(p) => write_to(Some(p), doc)?,
            None => eprint!("{doc}"),
        }
    }
    let m = RunManifest::new(name_of(command), outcome.params.0, outcome.seed);
    let text = serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n";
    match manifest_path(cli) {
        Some(p) => write_to(Some(&p), &text)?,
        None => eprint!("{text}"),
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let argv = match config_file::merge(std::env::args().collect(), SUBCOMMANDS) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(argv);
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("check failed");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
