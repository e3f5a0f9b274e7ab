//! `hyperlab <subcommand> --config PATH --out DIR [--plot] [--threads N] [--golden PATH]`
//!
//! Exit codes: 0 success, 1 I/O error, 2 invalid config, 3 numerical failure
//! (including any table row whose status is not `ok`), 4 golden mismatch.

mod commands;
mod config;
mod output;

use clap::{Parser, ValueEnum};
use commands::{Context, Experiment, RunError};
use config::{ConfigError, RunConfig};
use output::{golden_check, sha256_hex, svg_plot, write_table};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subcommand {
    /// Fan of leaf geodesics: leaf scalars, k and structure residuals.
    Foliate,
    /// Null decomposition and closed forms on coordinate spheres.
    WeylCheck,
    /// Radial comparison series and cone spheres in the Schwarzschild zone.
    ZsCompare,
    /// Hawking masses along hyperboloids and their large-t fit.
    Mass,
    /// Klein-Gordon evolution with decay, energy and commutation tables.
    Kg,
    /// Every residual table.
    Residuals,
}

impl From<Subcommand> for Experiment {
    fn from(s: Subcommand) -> Self {
        match s {
            Subcommand::Foliate => Experiment::Foliate,
            Subcommand::WeylCheck => Experiment::WeylCheck,
            Subcommand::ZsCompare => Experiment::ZsCompare,
            Subcommand::Mass => Experiment::Mass,
            Subcommand::Kg => Experiment::Kg,
            Subcommand::Residuals => Experiment::Residuals,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hyperlab", version, about = "Hyperboloidal foliation experiments")]
struct Cli {
    #[arg(value_enum)]
    subcommand: Subcommand,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; falls back to `output.dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot next to the main table.
    #[arg(long)]
    plot: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Golden CSV, or a directory of them, to compare the outputs against.
    #[arg(long)]
    golden: Option<PathBuf>,
    /// Relative tolerance of the golden comparison.
    #[arg(long, default_value_t = 1e-9)]
    golden_rtol: f64,
}

enum Failure {
    Io(String),
    Config(ConfigError),
    Numerical(String),
    Golden(Vec<output::Mismatch>),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Golden(_) => 4,
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Io(e) => eprintln!("error: {e}"),
                Failure::Config(e) => eprintln!("error: {e}"),
                Failure::Numerical(e) => eprintln!("error: {e}"),
                Failure::Golden(ms) => {
                    for m in ms {
                        eprintln!("golden mismatch in {}: {}", m.file, m.detail);
                    }
                }
            }
            ExitCode::from(f.code())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let text = std::fs::read(&cli.config).map_err(|e| Failure::Io(format!("cannot read {}: {e}", cli.config.display())))?;
    let hash = sha256_hex(&text);
    let text = String::from_utf8(text).map_err(|e| Failure::Config(ConfigError::Invariant { invariant: "utf8", detail: e.to_string() }))?;
    let cfg = RunConfig::parse(&text).map_err(Failure::Config)?;
    if cli.threads == Some(0) {
        return Err(Failure::Config(ConfigError::Invariant { invariant: "threads_positive", detail: "--threads must be at least 1".into() }));
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .ok_or_else(|| Failure::Config(ConfigError::Invariant { invariant: "output_dir", detail: "give --out or output.dir".into() }))?;
    let plot = cli.plot || cfg.output.plot;
    let golden = cli.golden.clone().or_else(|| cfg.output.golden.clone());
    let ctx = Context::new(cfg).map_err(Failure::Config)?;
    let exp = Experiment::from(cli.subcommand);

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Io(e.to_string()))?;
    let outputs = pool.install(|| commands::run(exp, &ctx)).map_err(|e| match e {
        RunError::Config(c) => Failure::Config(c),
        RunError::Numerical(s) => Failure::Numerical(s),
    })?;

    std::fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let mut failed = Vec::new();
    for o in &outputs {
        let path = write_table(&out, &o.table, exp.name(), &hash, ctx.tolerances())?;
        println!("wrote {}", path.display());
        if o.table.failures() > 0 {
            failed.push(format!("{} rows of {} failed", o.table.failures(), o.table.file_name()));
        }
        if let (true, Some(spec)) = (plot, &o.plot) {
            if let Some(svg) = svg_plot(&o.table, spec) {
                let p = out.join(format!("{}.svg", o.table.name));
                std::fs::write(&p, svg)?;
                println!("wrote {}", p.display());
            }
        }
        written.push(path);
    }
    if !failed.is_empty() {
        return Err(Failure::Numerical(failed.join("; ")));
    }
    if let Some(g) = golden {
        let ms = golden_check(&written, &g, cli.golden_rtol);
        if !ms.is_empty() {
            return Err(Failure::Golden(ms));
        }
        println!("golden comparison passed");
    }
    Ok(())
}
