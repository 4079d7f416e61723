use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cellfree::sim::{emit_results, run_trials, OutputFormat};
use cellfree::{Mode, Resolution, SystemConfig};

/// Monte-Carlo simulation of a cell-free or small-cell downlink.
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// TOML configuration; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// cellfree, smallcell-mrt, smallcell-zf or smallcell-rzf.
    #[arg(long)]
    mode: Option<Mode>,
    /// DAC resolution in bits, or `inf`.
    #[arg(long)]
    bits: Option<Resolution>,
    /// Fronthaul capacity in bps/Hz, or `inf`.
    #[arg(long)]
    fronthaul: Option<f64>,
    /// csv or structured (JSON).
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
}

fn load(args: &Args) -> Result<SystemConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            SystemConfig::from_toml_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => SystemConfig::default(),
    };
    if let Some(t) = args.trials {
        config.trials = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(b) = args.bits {
        config.b = b;
    }
    if let Some(c) = args.fronthaul {
        config.c = c;
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let result = load(&args).and_then(|config| {
        let report = run_trials(&config).map_err(|e| e.to_string())?;
        let paths = emit_results(&report, &args.out, args.format).map_err(|e| e.to_string())?;
        let median = report.median_rate().map_err(|e| e.to_string())?;
        let ee = report.mean_ee().map_err(|e| e.to_string())?;
        println!(
            "{} B={} C={}: {} trials ({} flagged), median rate {median:.4} bps/Hz, EE {ee:.6e} bits/J",
            report.config.mode,
            report.config.b,
            report.config.c,
            report.config.trials,
            report.flagged.len()
        );
        for p in paths {
            println!("wrote {}", p.display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
