use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use jforms::grid::io::write_form;
use jforms_cli::commands::{self, CliError, Command, Context, Output};
use jforms_cli::config::{ExperimentConfig, FormFormat};
use jforms_cli::report::{Report, Status, Timing};
use serde_json::json;

/// Discrete forms, J-invariants and taming forms on the 4-torus.
#[derive(Parser)]
#[command(name = "jforms", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for all randomized inputs; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn write_outputs(dir: &Path, format: &FormFormat, out: &Output) -> std::io::Result<()> {
    for t in &out.tables {
        t.write(dir)?;
    }
    if !out.forms.is_empty() {
        let forms = dir.join("forms");
        std::fs::create_dir_all(&forms)?;
        let ext = match format {
            FormFormat::Json => "json",
            FormFormat::Binary => "jfrm",
        };
        for (name, grid, form) in &out.forms {
            write_form(&forms.join(format!("{name}.{ext}")), grid, form).map_err(std::io::Error::other)?;
        }
    }
    if let Some(dump) = &out.fiber_dump {
        std::fs::write(dir.join("fiber_dump.json"), serde_json::to_string_pretty(dump)? + "\n")?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<Status, CliError> {
    let (config, bytes) = ExperimentConfig::load(&cli.config)?;
    let dir = cli.out.clone().unwrap_or_else(|| config.output.dir.clone());
    let seed = cli.seed.unwrap_or(config.seed);
    let ctx = Context { config, seed };
    let mut timing = Timing::start();
    let clock = Instant::now();
    let result = commands::run(cli.command, &ctx);
    timing.elapsed_s = clock.elapsed().as_secs_f64();
    let name = cli.command.name();
    let out = match result {
        Ok(out) => out,
        Err(e @ CliError::Compute(_)) => {
            let report = Report::new(name, &bytes, seed, Status::Fail, json!({"error": e.to_string()}), timing);
            report.write(&dir)?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    timing.steps = out.steps.clone();
    let status = out.status.unwrap_or(Status::Pass);
    write_outputs(&dir, &ctx.config.output.form_format, &out)?;
    if let Some(failing) = out.result.get("failing").and_then(|f| f.as_array()).filter(|f| !f.is_empty()) {
        eprintln!("failing checks: {}", serde_json::to_string(failing).unwrap_or_default());
    }
    let report = Report::new(name, &bytes, seed, status, out.result, timing);
    report.write(&dir)?;
    eprintln!("{name}: {status:?} (report in {})", dir.join("report.json").display());
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
