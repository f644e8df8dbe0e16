use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{aggregate, compute_stats, planar_error_series, table_csv, table_text, ErrorStats, TableRow};
use crate::runlog::RunLog;
use crate::sindy::{
    build_target, load_model, save_model, solve_sr3, solve_stlsq, SindyModel, TrainingSet,
};
use crate::trajectory::TrajectoryKind;
use crate::wind::WindModel;

use super::config::{set_dotted, ControllerKind, ExperimentConfig, SolverKind};
use super::runner::{run_closed_loop, Controller, Disturbance, RunSetup};

/// One closed-loop run under the configured wind, seeded by `seed`.
pub fn simulate(
    cfg: &ExperimentConfig,
    kind: ControllerKind,
    model: Option<&SindyModel>,
    seed: u64,
) -> Result<RunLog> {
    let setup = RunSetup::from_config(cfg)?;
    let mut ou = cfg.wind.ou;
    ou.seed = seed;
    let mut wind = WindModel::new(ou, cfg.wind.composition, cfg.dt)?;
    simulate_with(cfg, kind, model, &setup, &mut wind)
}

pub fn simulate_with(
    cfg: &ExperimentConfig,
    kind: ControllerKind,
    model: Option<&SindyModel>,
    setup: &RunSetup,
    disturbance: &mut dyn Disturbance,
) -> Result<RunLog> {
    let initial = setup.initial_state()?;
    let mut controller = Controller::from_config(cfg, kind, model, &initial);
    run_closed_loop(setup, &mut controller, disturbance)
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::from(e).in_file(path))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::from(e).in_file(path))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEntry {
    pub trajectory: String,
    pub controller: String,
    pub seed: u64,
    pub file: String,
    pub crashed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crash_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<ErrorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub config_digest: String,
    pub config: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_digest: Option<String>,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunEntry>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            tool: format!("gustbench {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            config_digest: cfg.digest(),
            config: cfg.to_canonical_toml(),
            model_digest: None,
            seeds: cfg.seed_list(),
            runs: Vec::new(),
            files: Vec::new(),
        }
    }

    fn add_file(&mut self, out_dir: &Path, rel: &str) -> Result<()> {
        self.files.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_file(&out_dir.join(rel))?,
        });
        Ok(())
    }

    fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Contract(format!("manifest serialization: {e}")))?;
        write_text(&path, &(text + "\n"))?;
        Ok(path)
    }
}

fn run_file(traj: TrajectoryKind, arm: &str, seed: u64) -> String {
    format!("runs/{}_{}_seed{}.csv", traj.name(), arm, seed)
}

/// Run the stock loop over every seed and write one log per run.
pub fn collect(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Manifest> {
    if cfg.controller == ControllerKind::Asindy && cfg.asindy.adaptation.enabled {
        return Err(Error::Config(
            "data collection uses pid or asindy with adaptation disabled".into(),
        ));
    }
    create_dir(&out_dir.join("runs"))?;
    let seeds = cfg.seed_list();
    let arm = cfg.controller.name();
    let logs: Vec<Result<RunLog>> = seeds
        .par_iter()
        .map(|&seed| simulate(cfg, cfg.controller, None, seed))
        .collect();

    let mut manifest = Manifest::new("collect", cfg);
    for (seed, log) in seeds.iter().zip(logs) {
        let log = log?;
        let rel = run_file(cfg.trajectory.kind, arm, *seed);
        log.write_csv(&out_dir.join(&rel))?;
        manifest.runs.push(RunEntry {
            trajectory: cfg.trajectory.kind.name().into(),
            controller: arm.into(),
            seed: *seed,
            file: rel.clone(),
            crashed: log.crash().is_some(),
            crash_reason: log.crash().map(str::to_string),
            stats: None,
        });
        manifest.add_file(out_dir, &rel)?;
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Training data from one or more logs, with errors attributed to the file.
pub fn training_data(log_paths: &[PathBuf], cfg: &ExperimentConfig) -> Result<TrainingSet> {
    if log_paths.is_empty() {
        return Err(Error::Data("no run logs given".into()));
    }
    let library = cfg.identify.library_spec()?;
    let sets = log_paths
        .iter()
        .map(|p| {
            let log = RunLog::read_csv(p)?;
            if let Some(why) = log.crash() {
                return Err(Error::Data(format!("run crashed ({why})")).in_file(p));
            }
            build_target(&log, &cfg.vehicle, &library, &cfg.identify.preprocess).map_err(|e| e.in_file(p))
        })
        .collect::<Result<Vec<_>>>()?;
    TrainingSet::concat(&sets)
}

pub fn fit_model(data: &TrainingSet, cfg: &ExperimentConfig) -> Result<SindyModel> {
    let id = &cfg.identify;
    match id.solver {
        SolverKind::Sr3 => Ok(solve_sr3(data, &id.sr3_settings()?)?.model),
        SolverKind::Stlsq => Ok(solve_stlsq(data, id.stlsq_threshold, id.stlsq_max_iter)?.model),
    }
}

/// Fit a residual-force model on the logs and save it to `out`.
pub fn identify(log_paths: &[PathBuf], cfg: &ExperimentConfig, out: &Path) -> Result<SindyModel> {
    let data = training_data(log_paths, cfg)?;
    let model = fit_model(&data, cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    save_model(&model, out)?;
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub table: Vec<TableRow>,
    pub runs: Vec<RunEntry>,
    pub manifest: Manifest,
}

impl Evaluation {
    pub fn row(&self, trajectory: TrajectoryKind, arm: ControllerKind) -> Option<&TableRow> {
        self.table
            .iter()
            .find(|r| r.trajectory == trajectory.name() && r.controller == arm.name())
    }
}

/// The model named by the configuration.
pub fn configured_model(cfg: &ExperimentConfig) -> Result<SindyModel> {
    let path = cfg
        .model_path
        .as_ref()
        .ok_or_else(|| Error::Config("evaluation needs a model (model_path or --model)".into()))?;
    if !path.is_file() {
        return Err(Error::Config(format!("model file {} does not exist", path.display())));
    }
    load_model(path)
}

fn per_run_csv(runs: &[RunEntry]) -> String {
    let mut out = String::from("trajectory,controller,seed,crashed,rmse_xy,mae_xy,p95_xy,max_xy,n_samples,file\n");
    for r in runs {
        let _ = write!(out, "{},{},{},{}", r.trajectory, r.controller, r.seed, r.crashed);
        match &r.stats {
            Some(s) => {
                for v in s.values() {
                    let _ = write!(out, ",{v:.16e}");
                }
                let _ = write!(out, ",{}", s.n_samples);
            }
            None => out.push_str(",,,,,"),
        }
        let _ = writeln!(out, ",{}", r.file);
    }
    out
}

/// Both controllers over the same seeds (hence the same gust sequences) on
/// each trajectory.
pub fn evaluate(
    cfg: &ExperimentConfig,
    model: &SindyModel,
    trajectories: &[TrajectoryKind],
    out_dir: &Path,
) -> Result<Evaluation> {
    model.validate()?;
    create_dir(&out_dir.join("runs"))?;
    let seeds = cfg.seed_list();
    let arms = [ControllerKind::Asindy, ControllerKind::Pid];
    let mut jobs: Vec<(TrajectoryKind, ControllerKind, u64)> = Vec::new();
    for &t in trajectories {
        for a in arms {
            jobs.extend(seeds.iter().map(|&s| (t, a, s)));
        }
    }

    let results: Vec<Result<(RunEntry, RunLog)>> = jobs
        .par_iter()
        .map(|&(traj, arm, seed)| {
            let mut c = cfg.clone();
            c.trajectory = c.trajectory.with_kind(traj);
            let log = simulate(&c, arm, Some(model), seed)?;
            let stats = match log.crash() {
                Some(_) => None,
                None => Some(compute_stats(&planar_error_series(&log, c.trajectory.ramp_time)?)?),
            };
            let entry = RunEntry {
                trajectory: traj.name().into(),
                controller: arm.name().into(),
                seed,
                file: run_file(traj, arm.name(), seed),
                crashed: log.crash().is_some(),
                crash_reason: log.crash().map(str::to_string),
                stats,
            };
            Ok((entry, log))
        })
        .collect();

    let mut manifest = Manifest::new("evaluate", cfg);
    manifest.model_digest = Some(hex::encode(Sha256::digest(
        crate::sindy::model_to_string(model).as_bytes(),
    )));
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        let (entry, log) = r?;
        log.write_csv(&out_dir.join(&entry.file))?;
        manifest.add_file(out_dir, &entry.file)?;
        runs.push(entry);
    }

    let mut table = Vec::new();
    for &traj in trajectories {
        for arm in arms {
            let mine: Vec<&RunEntry> = runs
                .iter()
                .filter(|r| r.trajectory == traj.name() && r.controller == arm.name())
                .collect();
            let ok: Vec<ErrorStats> = mine.iter().filter_map(|r| r.stats).collect();
            table.push(TableRow {
                trajectory: traj.name().into(),
                controller: arm.name().into(),
                stats: if ok.is_empty() { None } else { Some(aggregate(&ok)?) },
                runs: mine.len(),
                crashes: mine.iter().filter(|r| r.crashed).count(),
            });
        }
    }

    for (name, text) in [
        ("results.csv", table_csv(&table)),
        ("results.txt", table_text(&table)),
        ("per_run.csv", per_run_csv(&runs)),
    ] {
        write_text(&out_dir.join(name), &text)?;
        manifest.add_file(out_dir, name)?;
    }
    manifest.runs = runs.clone();
    manifest.write(out_dir)?;
    Ok(Evaluation {
        table,
        runs,
        manifest,
    })
}

/// Grid of dotted configuration keys and the values each takes.
pub type Grid = Vec<(String, Vec<toml::Value>)>;

pub fn parse_grid(text: &str) -> Result<Grid> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("grid: {e}")))?;
    let mut grid = Grid::new();
    for (k, v) in table {
        let values = match v {
            toml::Value::Array(a) if !a.is_empty() => a,
            toml::Value::Array(_) => return Err(Error::Config(format!("grid key '{k}' has no values"))),
            other => vec![other],
        };
        grid.push((k, values));
    }
    Ok(grid)
}

fn cross_product(grid: &Grid) -> Vec<Vec<(String, toml::Value)>> {
    let mut cells: Vec<Vec<(String, toml::Value)>> = vec![Vec::new()];
    for (key, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub assignments: Vec<(String, String)>,
    pub config_digest: Option<String>,
    pub outcome: std::result::Result<Vec<TableRow>, String>,
}

/// Evaluate every cell of the grid; a failing cell is recorded and the sweep continues.
pub fn sweep(
    base: &toml::Table,
    base_dir: &Path,
    grid: &Grid,
    model_override: Option<&SindyModel>,
    trajectories: &[TrajectoryKind],
    out_dir: &Path,
) -> Result<Vec<SweepCell>> {
    create_dir(out_dir)?;
    let mut cells = Vec::new();
    for (i, assignment) in cross_product(grid).into_iter().enumerate() {
        let shown: Vec<(String, String)> =
            assignment.iter().map(|(k, v)| (k.clone(), v.to_string())).collect();
        let cell_dir = out_dir.join(format!("cell_{i:03}"));
        let resolved = (|| {
            let mut table = base.clone();
            for (k, v) in &assignment {
                set_dotted(&mut table, k, v.clone())?;
            }
            ExperimentConfig::from_table_in(&table, base_dir)
        })();
        let (digest, outcome) = match resolved {
            Err(e) => (None, Err(e.to_string())),
            Ok(cfg) => {
                let run = || {
                    let model = match model_override {
                        Some(m) => m.clone(),
                        None => configured_model(&cfg)?,
                    };
                    evaluate(&cfg, &model, trajectories, &cell_dir)
                };
                (Some(cfg.digest()), run().map(|e| e.table).map_err(|e| e.to_string()))
            }
        };
        cells.push(SweepCell {
            assignments: shown,
            config_digest: digest,
            outcome,
        });
    }
    write_text(&out_dir.join("sweep.csv"), &sweep_csv(grid, &cells))?;
    Ok(cells)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn sweep_csv(grid: &Grid, cells: &[SweepCell]) -> String {
    let mut out = String::from("cell");
    for (k, _) in grid {
        let _ = write!(out, ",{}", csv_field(k));
    }
    out.push_str(",config_digest,trajectory,controller,runs,crashes,rmse_xy_mean,p95_xy_mean,error\n");
    for (i, cell) in cells.iter().enumerate() {
        let mut prefix = format!("{i}");
        for (_, v) in &cell.assignments {
            let _ = write!(prefix, ",{}", csv_field(v));
        }
        let digest = cell.config_digest.clone().unwrap_or_default();
        match &cell.outcome {
            Ok(rows) => {
                for r in rows {
                    let (rmse, p95) = r
                        .stats
                        .map(|s| (format!("{:.16e}", s.rmse_xy.mean), format!("{:.16e}", s.p95_xy.mean)))
                        .unwrap_or_default();
                    let _ = writeln!(
                        out,
                        "{prefix},{digest},{},{},{},{},{rmse},{p95},",
                        r.trajectory, r.controller, r.runs, r.crashes
                    );
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{prefix},{digest},,,,,,,{}", csv_field(e));
            }
        }
    }
    out
}
