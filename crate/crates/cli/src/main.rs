mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use otto_core::cycle::{finite_cycle, StationaryMethod};
use otto_core::error::OttoError;
use otto_core::nonadiabatic::{adiabaticity_pair, QCache};
use otto_core::optimize::{optimize, sweep_r_u_with};
use otto_core::stats::statistics_perfect_with;

use config::{ConfigError, Mode, Overrides, RunConfig};
use output::{Document, OPTIMA_COLUMNS, Q_COLUMNS, STATS_COLUMNS};

const EXIT_VALIDATION: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Quantum Otto engine statistics and asymmetry optimization.
#[derive(Debug, Parser)]
#[command(name = "otto", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nonadiabaticity parameters of both work strokes.
    Q(Common),
    /// Work and heat statistics at one operating point.
    Stats(Common),
    /// Finite-thermalization limit cycle with solver diagnostics.
    Cycle(Common),
    /// Statistics over the r_u grid at each tau_u.
    Sweep(Common),
    /// Optimal asymmetries over the tau_u grid.
    Optimize(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, short, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Q(_) => "q",
            Command::Stats(_) => "stats",
            Command::Cycle(_) => "cycle",
            Command::Sweep(_) => "sweep",
            Command::Optimize(_) => "optimize",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Q(c) | Command::Stats(c) | Command::Cycle(c) | Command::Sweep(c) | Command::Optimize(c) => c,
        }
    }
}

/// Keys that change where or how fast output is produced, not what it says.
const UNECHOED: &[&str] = &["jobs", "output", "sweep_output"];

fn header(doc: &mut Document, command: &str, config: &RunConfig) {
    doc.comment(format!("otto {}", env!("CARGO_PKG_VERSION")));
    doc.comment(format!("command = {command}"));
    for line in config.echo() {
        let key = line.split(" = ").next().unwrap_or_default();
        if !UNECHOED.contains(&key) {
            doc.comment(line);
        }
    }
}

fn write_output(path: Option<&Path>, doc: &Document) -> Result<()> {
    let text = doc.render();
    match path {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).context("writing standard output")
        }
    }
}

fn point_error(doc: &mut Document, tau_u: f64, r_u: f64, err: &OttoError) {
    let (t, r) = (doc.num(tau_u), doc.num(r_u));
    doc.error(format!("tau_u={t} r_u={r} {err}"));
}

/// Success, or success with some grid points recorded as `#error` lines.
enum Outcome {
    Complete,
    Partial,
}

fn run_q(config: &RunConfig) -> Result<Outcome> {
    let mut doc = Document::new(Q_COLUMNS, config.precision);
    header(&mut doc, "q", config);
    for tau_u in config.tau_values()? {
        let engine = config.engine_at(tau_u, config.engine.r_u);
        let pair = adiabaticity_pair(&engine)?;
        let fields = vec![doc.num(tau_u), doc.num(engine.r_u), doc.num(pair.q_f), doc.num(pair.q_b)];
        doc.row(fields);
    }
    write_output(config.output.as_deref(), &doc)?;
    Ok(Outcome::Complete)
}

fn run_stats(config: &RunConfig) -> Result<Outcome> {
    let mut doc = Document::new(STATS_COLUMNS, config.precision);
    header(&mut doc, "stats", config);
    let engine = config.engine_at(config.engine.tau_u, config.engine.r_u);
    let pair = adiabaticity_pair(&engine)?;
    let stats = match config.mode {
        Mode::Perfect => statistics_perfect_with(&engine, pair)?,
        Mode::Finite => finite_cycle(&engine)?.stats,
    };
    doc.stats_row(engine.tau_u, engine.r_u, pair.q_f, pair.q_b, &stats);
    write_output(config.output.as_deref(), &doc)?;
    Ok(Outcome::Complete)
}

fn run_cycle(config: &RunConfig) -> Result<Outcome> {
    let engine = config.engine_at(config.engine.tau_u, config.engine.r_u);
    if engine.perfect_thermalization() {
        return Err(ConfigError {
            source_: config.source_of("mode"),
            message: "cycle needs finite heat strokes: set mode = finite with tau_b or tau_b_ratio".into(),
        }
        .into());
    }
    let cycle = finite_cycle(&engine)?;
    let mut doc = Document::new(STATS_COLUMNS, config.precision);
    header(&mut doc, "cycle", config);
    let st = &cycle.stationary;
    let method = match st.method {
        StationaryMethod::PowerIteration => "power_iteration",
        StationaryMethod::LinearSolve => "linear_solve",
    };
    doc.comment(format!("tau_b = {}", doc.num(engine.tau_b)));
    doc.comment(format!("leakage = {}", doc.num(st.leakage)));
    doc.comment(format!("spectral_gap = {}", doc.num(st.spectral_gap)));
    doc.comment(format!("residual = {}", doc.num(st.residual)));
    doc.comment(format!("iterations = {}", st.iterations));
    doc.comment(format!("method = {method}"));
    doc.stats_row(engine.tau_u, engine.r_u, cycle.pair.q_f, cycle.pair.q_b, &cycle.stats);
    write_output(config.output.as_deref(), &doc)?;
    Ok(Outcome::Complete)
}

fn run_sweep(config: &RunConfig) -> Result<Outcome> {
    let r_grid = config.r_values()?;
    let mode = config.sweep_mode();
    let cache = QCache::new();
    let mut doc = Document::new(STATS_COLUMNS, config.precision);
    header(&mut doc, "sweep", config);
    let mut failures = 0;
    for tau_u in config.tau_values()? {
        let points = sweep_r_u_with(&config.engine, tau_u, &r_grid, mode, &cache, config.jobs)?;
        for point in points {
            match &point.outcome {
                Ok(record) => doc.record_row(record),
                Err(err) => {
                    failures += 1;
                    point_error(&mut doc, point.tau_u, point.r_u, err);
                }
            }
        }
    }
    write_output(config.output.as_deref(), &doc)?;
    Ok(if failures > 0 { Outcome::Partial } else { Outcome::Complete })
}

/// `run.csv` -> `run.sweep.csv`.
fn derived_sweep_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("optima");
    output.with_file_name(format!("{stem}.sweep.csv"))
}

fn run_optimize(config: &RunConfig) -> Result<Outcome> {
    let tau_grid = config.tau_values()?;
    let settings = config.optimizer_settings()?;
    let run = optimize(&config.engine, &tau_grid, config.sweep_mode(), &settings)?;

    let mut sweep = Document::new(STATS_COLUMNS, config.precision);
    header(&mut sweep, "optimize", config);
    let mut optima = Document::new(OPTIMA_COLUMNS, config.precision);
    header(&mut optima, "optimize", config);

    for scan in &run.scans {
        for point in &scan.points {
            match &point.outcome {
                Ok(record) => sweep.record_row(record),
                Err(err) => {
                    point_error(&mut sweep, point.tau_u, point.r_u, err);
                    point_error(&mut optima, point.tau_u, point.r_u, err);
                }
            }
        }
    }
    for d in &run.discontinuities {
        let line = format!(
            "discontinuity merit={} tau_u={} tau_before={} tau_after={} jump={}",
            d.merit.name(),
            optima.num(d.tau_u),
            optima.num(d.tau_before),
            optima.num(d.tau_after),
            optima.num(d.jump)
        );
        optima.comment(line);
    }
    for c in &run.cooptimal {
        let line = format!(
            "cooptimal pair={} tau_u={} r_u={} mismatch={} interpolated={} boundary={}",
            c.pair.name(),
            optima.num(c.tau_u),
            optima.num(c.r_u),
            optima.num(c.mismatch),
            c.interpolated,
            c.boundary
        );
        optima.comment(line);
    }
    for scan in &run.scans {
        match &scan.optima {
            Ok(row) => optima.optima_row(row),
            Err(err) => {
                optima.comment(format!("tau_u={} {err}", optima.num(scan.tau_u)));
                let mut fields = vec![String::new(); OPTIMA_COLUMNS.len()];
                fields[0] = optima.num(scan.tau_u);
                optima.row(fields);
            }
        }
    }

    let sweep_path = config
        .sweep_output
        .clone()
        .or_else(|| config.output.as_deref().map(derived_sweep_path));
    if let Some(path) = &sweep_path {
        write_output(Some(path), &sweep)?;
    }
    write_output(config.output.as_deref(), &optima)?;
    Ok(if run.failure_count() > 0 { Outcome::Partial } else { Outcome::Complete })
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<OttoError>() {
            return if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERICAL };
        }
    }
    EXIT_VALIDATION
}

fn run(cli: &Cli) -> Result<Outcome> {
    let common = cli.command.common();
    let config = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    match cli.command {
        Command::Q(_) => run_q(&config),
        Command::Stats(_) => run_stats(&config),
        Command::Cycle(_) => run_cycle(&config),
        Command::Sweep(_) => run_sweep(&config),
        Command::Optimize(_) => run_optimize(&config),
    }
    .with_context(|| format!("otto {} failed", cli.command.name()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => {
            eprintln!("warning: some grid points failed; see #error lines");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
