use clap::Parser;

use gensmooth::{manifest_for, run_manifest, Cli};

fn main() {
    let cli = Cli::parse();
    let result = manifest_for(cli.command).and_then(|m| run_manifest(&m));
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
