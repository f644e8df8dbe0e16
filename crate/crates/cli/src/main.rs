use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use gustbench::harness::{
    self, load_table, set_dotted, ControllerKind, ExperimentConfig,
};
use gustbench::metrics::table_text;
use gustbench::sindy::load_model;
use gustbench::trajectory::TrajectoryKind;
use gustbench::{Error, Result};

/// Gust-rejection benchmark: collect flight logs, identify a residual-force
/// model, and compare the adaptive controller against PID.
#[derive(Parser)]
#[command(name = "gustbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fly the stock loop under wind and write one log per seed.
    Collect {
        #[command(flatten)]
        common: Common,
        /// Controller flown during collection (pid, or asindy with adaptation off).
        #[arg(long)]
        controller: Option<String>,
        #[arg(long)]
        trajectory: Option<String>,
    },
    /// Fit a residual-force model to run logs (files or directories of CSVs).
    Identify {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Run both controllers on paired seeds and write comparison tables.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Trajectory name, comma-separated list, or "all".
        #[arg(long, default_value = "all")]
        trajectory: String,
    },
    /// Evaluate over the cross product of a parameter grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// TOML file mapping dotted config keys to lists of values.
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "all")]
        trajectory: String,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated seed list; sets the run count.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

impl Common {
    /// User table with command-line overrides applied, and its base directory.
    fn table(&self) -> Result<(toml::Table, PathBuf)> {
        let (mut table, dir) = match &self.config {
            Some(p) => (
                load_table(p)?,
                p.parent().map(Path::to_path_buf).unwrap_or_default(),
            ),
            None => (toml::Table::new(), PathBuf::from(".")),
        };
        if let Some(seeds) = &self.seeds {
            let vals = seeds.iter().map(|s| toml::Value::Integer(*s as i64)).collect();
            set_dotted(&mut table, "seeds", toml::Value::Array(vals))?;
            set_dotted(&mut table, "runs", toml::Value::Integer(seeds.len() as i64))?;
        }
        if let Some(runs) = self.runs {
            if self.seeds.as_ref().is_some_and(|s| s.len() != runs) {
                return Err(Error::Config("--runs disagrees with the number of --seeds".into()));
            }
            set_dotted(&mut table, "runs", toml::Value::Integer(runs as i64))?;
        }
        Ok((table, dir))
    }

    fn config(&self, extra: &[(&str, toml::Value)]) -> Result<ExperimentConfig> {
        let (mut table, dir) = self.table()?;
        for (k, v) in extra {
            set_dotted(&mut table, k, v.clone())?;
        }
        let cfg = ExperimentConfig::from_table_in(&table, &dir);
        match (&self.config, cfg) {
            (Some(p), Err(e @ Error::Config(_))) => Err(e.in_file(p)),
            (_, r) => r,
        }
    }
}

fn parse_trajectories(s: &str) -> Result<Vec<TrajectoryKind>> {
    if s == "all" {
        return Ok(TrajectoryKind::ALL.to_vec());
    }
    s.split(',').map(|t| t.trim().parse()).collect()
}

fn expand_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let runs = p.join("runs");
            let dir = if runs.is_dir() { runs } else { p.clone() };
            let mut found: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::from(e).in_file(&dir))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            if found.is_empty() {
                return Err(Error::Data(format!("no CSV logs in {}", dir.display())));
            }
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn model_for(cfg: &ExperimentConfig, flag: &Option<PathBuf>) -> Result<gustbench::sindy::SindyModel> {
    match flag {
        Some(p) if !p.is_file() => Err(Error::Config(format!("model file {} does not exist", p.display()))),
        Some(p) => load_model(p),
        None => harness::configured_model(cfg),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect {
            common,
            controller,
            trajectory,
        } => {
            let mut extra = Vec::new();
            if let Some(c) = controller {
                let kind: ControllerKind = c.parse()?;
                extra.push(("controller", toml::Value::String(kind.name().into())));
            }
            if let Some(t) = trajectory {
                let kind: TrajectoryKind = t.parse()?;
                extra.push(("trajectory.kind", toml::Value::String(kind.name().into())));
            }
            let cfg = common.config(&extra)?;
            let manifest = harness::collect(&cfg, &common.out)?;
            if !common.quiet {
                let crashed = manifest.runs.iter().filter(|r| r.crashed).count();
                println!(
                    "collected {} runs ({} crashed) into {}",
                    manifest.runs.len(),
                    crashed,
                    common.out.display()
                );
            }
        }
        Command::Identify {
            config,
            out,
            quiet,
            logs,
        } => {
            let cfg = match &config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let logs = expand_logs(&logs)?;
            let model = harness::identify(&logs, &cfg, &out)?;
            if !quiet {
                println!(
                    "identified from {} logs ({} samples), solver {}",
                    logs.len(),
                    model.meta.n_samples,
                    model.meta.solver
                );
                print!("{}", model.describe());
                println!("model written to {}", out.display());
            }
        }
        Command::Evaluate {
            common,
            model,
            trajectory,
        } => {
            let cfg = common.config(&[])?;
            let model = model_for(&cfg, &model)?;
            let trajs = parse_trajectories(&trajectory)?;
            let ev = harness::evaluate(&cfg, &model, &trajs, &common.out)?;
            if !common.quiet {
                print!("{}", table_text(&ev.table));
                println!("results written to {}", common.out.display());
            }
        }
        Command::Sweep {
            common,
            grid,
            model,
            trajectory,
        } => {
            let (table, dir) = common.table()?;
            let text = std::fs::read_to_string(&grid).map_err(|e| Error::from(e).in_file(&grid))?;
            let grid = harness::parse_grid(&text).map_err(|e| e.in_file(&grid))?;
            let model = match &model {
                Some(_) => Some(model_for(&ExperimentConfig::default(), &model)?),
                None => None,
            };
            let trajs = parse_trajectories(&trajectory)?;
            let cells = harness::sweep(&table, &dir, &grid, model.as_ref(), &trajs, &common.out)?;
            if !common.quiet {
                for (i, c) in cells.iter().enumerate() {
                    let label: Vec<String> = c.assignments.iter().map(|(k, v)| format!("{k}={v}")).collect();
                    match &c.outcome {
                        Ok(_) => println!("cell {i} [{}]: ok", label.join(", ")),
                        Err(e) => println!("cell {i} [{}]: failed: {e}", label.join(", ")),
                    }
                }
                println!("sweep table written to {}", common.out.join("sweep.csv").display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
