use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use homsim::experiments::{
    emit_csv, emit_svg, parse_sweep_spec, run_preset, run_program, ExperimentConfig, Preset,
    ResultTable, RunError,
};
use homsim::program::parse;

/// Monte Carlo simulation of two-excitation interference in an atomic ensemble.
///
/// Writes `<out>/<name>.csv` (and `.svg` with `--svg`). Settings are applied
/// in order: preset defaults, `--config` file, command-line flags.
#[derive(Debug, Parser)]
#[command(name = "homsim", version)]
struct Cli {
    /// fig3a, fig3b, fig4, fig5a, fig5b, g2_s1, g2_s2 or boson.
    #[arg(long)]
    preset: Option<String>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Turn off preparation noise, memory loss and detector imperfections.
    #[arg(long)]
    ideal: bool,
    /// `key = value` file; see the README for the key list.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write an SVG plot.
    #[arg(long)]
    svg: bool,
    /// Pulse-program file to run instead of a preset.
    #[arg(long, requires = "sweep")]
    program: Option<PathBuf>,
    /// `key:start:stop:steps`, e.g. `raman.duration:0:620:32`.
    #[arg(long, requires = "program")]
    sweep: Option<String>,
}

enum Failure {
    Usage(String),
    Io(String),
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let usage = |e: &dyn std::fmt::Display| Failure::Usage(e.to_string());
    let preset = match &cli.preset {
        Some(name) => name.parse::<Preset>().map_err(|e| usage(&e))?,
        None if cli.program.is_some() => Preset::Fig3b,
        None => return Err(Failure::Usage("either --preset or --program is required".into())),
    };
    let mut config = match &cli.config {
        Some(path) => {
            let text = read(path)?;
            ExperimentConfig::from_text(&text, preset)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::for_preset(preset),
    };
    if cli.preset.is_some() {
        config.preset = preset;
    }
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    config.ideal |= cli.ideal;

    let (table, stem) = match (&cli.program, &cli.sweep) {
        (Some(path), Some(spec)) => {
            let source = read(path)?;
            let program =
                parse(&source).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            let (target, sweep) = parse_sweep_spec(spec).map_err(|e| usage(&e))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "program".into());
            let table = run_program(&stem, &program, &target, &sweep, &config).map_err(run_failure)?;
            (table, stem)
        }
        _ => {
            let table = run_preset(&config).map_err(run_failure)?;
            (table, config.preset.name().to_string())
        }
    };
    write_outputs(&table, &cli.out, &stem, cli.svg)
}

fn run_failure(e: RunError) -> Failure {
    Failure::Usage(e.to_string())
}

fn write_outputs(table: &ResultTable, dir: &Path, stem: &str, svg: bool) -> Result<(), Failure> {
    let io = |p: &Path, e: std::io::Error| Failure::Io(format!("cannot write {}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let csv = dir.join(format!("{stem}.csv"));
    emit_csv(table, &csv).map_err(|e| io(&csv, e))?;
    println!("{}", csv.display());
    if svg {
        let path = dir.join(format!("{stem}.svg"));
        emit_svg(table, &path).map_err(|e| io(&path, e))?;
        println!("{}", path.display());
    }
    for (k, v) in &table.results {
        println!("{k} = {v}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
