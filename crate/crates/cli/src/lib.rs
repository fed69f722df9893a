//! Experiment runner for `gensmooth-core`: flag and manifest parsing,
//! parallel seed fan-out, CSV and JSON output.

pub mod args;
pub mod commands;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::Path;

pub use args::{Cli, Command, Manifest};
pub use commands::{execute, Outcome};

/// Resolves a parsed command line to the manifest it describes, loading it
/// from disk for `run --config`.
pub fn manifest_for(command: Command) -> anyhow::Result<Manifest> {
    Ok(match command {
        Command::Linreg(a) => Manifest::Linreg(a),
        Command::Dfo(a) => Manifest::Dfo(a),
        Command::MseValidate(a) => Manifest::MseValidate(a),
        Command::Theory(a) => Manifest::Theory(a),
        Command::Gridsearch(a) => Manifest::Gridsearch(a),
        Command::Run(r) => {
            let text = fs::read_to_string(&r.config)?;
            let mut m = Manifest::from_toml(&text)?;
            if let Some(out) = r.out {
                set_out(&mut m, out);
            }
            m
        }
    })
}

fn set_out(m: &mut Manifest, out: std::path::PathBuf) {
    let o = match m {
        Manifest::Linreg(a) => &mut a.output,
        Manifest::Dfo(a) => &mut a.output,
        Manifest::MseValidate(a) => &mut a.output,
        Manifest::Theory(a) => &mut a.output,
        Manifest::Gridsearch(a) => &mut a.output,
    };
    o.out = Some(out);
}

/// Runs a manifest and writes its outputs: CSV to `--out` or stdout, the
/// text report to stdout, and the JSON summary to `--summary`.
pub fn run_manifest(manifest: &Manifest) -> anyhow::Result<()> {
    let output = manifest.output();
    if let Some(path) = &output.save_config {
        fs::write(path, manifest.to_toml()?)?;
    }
    let outcome = execute(manifest)?;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    if !outcome.rows.is_empty() {
        match &output.out {
            Some(path) => write_csv_file(path, &outcome.rows)?,
            None => output::write_rows(&mut lock, &outcome.rows)?,
        }
    }
    lock.write_all(outcome.report.as_bytes())?;
    if let Some(path) = &output.summary {
        fs::write(path, serde_json::to_string_pretty(&outcome.summary)? + "\n")?;
    }
    Ok(())
}

fn write_csv_file(path: &Path, rows: &[output::Row]) -> anyhow::Result<()> {
    let file = fs::File::create(path)?;
    output::write_rows(std::io::BufWriter::new(file), rows)
}
