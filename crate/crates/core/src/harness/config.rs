//! Experiment configuration.
//!
//! Loaded from TOML. Missing keys take defaults; the `[wind]` table starts
//! from the chosen `preset` and individual keys override it. The resolved
//! configuration has a canonical TOML form whose SHA-256 identifies a run.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::control::{AdaptationParams, ControllerGains, ForceMapping, PidGains};
use crate::error::{Error, Result};
use crate::sim::{validate_dt, VehicleParams};
use crate::sindy::{
    EqualityConstraints, LibrarySpec, LibraryTerm, PreprocessSettings, Sr3Settings,
};
use crate::trajectory::TrajectorySpec;
use crate::wind::{OUParams, WindCompositionParams, WindPreset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Asindy,
    Pid,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Asindy => "asindy",
            ControllerKind::Pid => "pid",
        }
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asindy" => Ok(ControllerKind::Asindy),
            "pid" => Ok(ControllerKind::Pid),
            _ => Err(Error::Config(format!("unknown controller '{s}' (expected asindy or pid)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindConfig {
    pub preset: WindPreset,
    pub ou: OUParams,
    pub composition: WindCompositionParams,
}

impl Default for WindConfig {
    fn default() -> Self {
        WindConfig::from_preset(WindPreset::Default)
    }
}

impl WindConfig {
    pub fn from_preset(preset: WindPreset) -> Self {
        let (ou, composition) = preset.params();
        Self {
            preset,
            ou,
            composition,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrashLimits {
    /// m
    pub max_position: f64,
    /// m/s
    pub max_speed: f64,
}

impl Default for CrashLimits {
    fn default() -> Self {
        Self {
            max_position: 50.0,
            max_speed: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsindySection {
    pub gains: ControllerGains,
    pub adaptation: AdaptationParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Sr3,
    Stlsq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifySettings {
    pub solver: SolverKind,
    /// Library term names, in order.
    pub library: Vec<String>,
    pub sr3: Sr3Settings,
    pub stlsq_threshold: f64,
    pub stlsq_max_iter: usize,
    pub preprocess: PreprocessSettings,
    /// Coefficients pinned to zero, as `"term:axis"` (axis x, y or z).
    pub zero: Vec<String>,
}

impl Default for IdentifySettings {
    fn default() -> Self {
        Self {
            solver: SolverKind::Sr3,
            library: LibrarySpec::default().names().iter().map(|s| s.to_string()).collect(),
            sr3: Sr3Settings::default(),
            stlsq_threshold: 1e-3,
            stlsq_max_iter: 20,
            preprocess: PreprocessSettings::default(),
            zero: Vec::new(),
        }
    }
}

impl IdentifySettings {
    pub fn library_spec(&self) -> Result<LibrarySpec> {
        let terms: Vec<LibraryTerm> = self
            .library
            .iter()
            .map(|s| s.parse().map_err(|e: Error| Error::Config(e.to_string())))
            .collect::<Result<_>>()?;
        LibrarySpec::new(terms)
    }

    /// Solver settings with the `zero` list turned into constraints.
    pub fn sr3_settings(&self) -> Result<Sr3Settings> {
        let lib = self.library_spec()?;
        let mut s = self.sr3.clone();
        if !self.zero.is_empty() {
            let entries = self
                .zero
                .iter()
                .map(|spec| {
                    let bad = || Error::Config(format!("bad zero constraint '{spec}'"));
                    let (term, axis) = spec.rsplit_once(':').ok_or_else(bad)?;
                    let term: LibraryTerm = term.parse().map_err(|_| bad())?;
                    let i = lib.position(term).ok_or_else(bad)?;
                    let a = match axis {
                        "x" => 0,
                        "y" => 1,
                        "z" => 2,
                        _ => return Err(bad()),
                    };
                    Ok((i, a))
                })
                .collect::<Result<Vec<_>>>()?;
            s.constraints = Some(EqualityConstraints::zero_entries(lib.len(), &entries));
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Physics and control step, s.
    pub dt: f64,
    /// Logging rate, Hz. `1 / (dt * log_rate)` must be an integer.
    pub log_rate: f64,
    pub runs: usize,
    /// Run `i` uses seed `base_seed + i` unless `seeds` is given.
    pub base_seed: u64,
    pub seeds: Option<Vec<u64>>,
    /// Controller used by `collect`.
    pub controller: ControllerKind,
    pub model_path: Option<PathBuf>,
    pub crash: CrashLimits,
    pub vehicle: VehicleParams,
    pub wind: WindConfig,
    pub trajectory: TrajectorySpec,
    pub mapping: ForceMapping,
    pub pid: PidGains,
    pub asindy: AsindySection,
    pub identify: IdentifySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dt: 0.0025,
            log_rate: 40.0,
            runs: 10,
            base_seed: 1,
            seeds: None,
            controller: ControllerKind::Pid,
            model_path: None,
            crash: CrashLimits::default(),
            vehicle: VehicleParams::default(),
            wind: WindConfig::default(),
            trajectory: TrajectorySpec::default(),
            mapping: ForceMapping::default(),
            pid: PidGains::default(),
            asindy: AsindySection::default(),
            identify: IdentifySettings::default(),
        }
    }
}

fn merge(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Raw user table of a configuration file, before defaults are applied.
pub fn load_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    text.parse()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()).in_file(path))
}

/// Set `a.b.c = value`, creating tables along the way.
pub fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::Config(format!("empty key '{key}'")))?;
    let mut t = table;
    for p in parts {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("'{p}' in '{key}' is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Resolve user overrides against the defaults and the wind preset.
    pub fn from_table(user: &toml::Table) -> Result<Self> {
        let preset = match user.get("wind").and_then(|w| w.get("preset")) {
            Some(v) => WindPreset::deserialize(v.clone())
                .map_err(|e| Error::Config(format!("wind.preset: {e}")))?,
            None => WindPreset::Default,
        };
        let base = ExperimentConfig {
            wind: WindConfig::from_preset(preset),
            ..Default::default()
        };
        let mut table = toml::Table::try_from(&base)
            .map_err(|e| Error::Config(format!("cannot serialize defaults: {e}")))?;
        merge(&mut table, user);
        let cfg: ExperimentConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Self::from_table(&user)
    }

    /// Load, resolve `model_path` against the file's directory and check it exists.
    pub fn load(path: &Path) -> Result<Self> {
        let table = load_table(path)?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_table_in(&table, dir).map_err(|e| match e {
            Error::Config(_) => e.in_file(path),
            other => other,
        })
    }

    /// Resolve a table whose relative paths are taken from `base_dir`.
    pub fn from_table_in(table: &toml::Table, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::from_table(table)?;
        if let Some(mp) = cfg.model_path.as_mut().filter(|p| p.is_relative()) {
            *mp = base_dir.join(&*mp);
        }
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn check_files(&self) -> Result<()> {
        match &self.model_path {
            Some(mp) if !mp.is_file() => Err(Error::Config(format!(
                "model file {} does not exist",
                mp.display()
            ))),
            _ => Ok(()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_dt(self.dt)?;
        if !(self.log_rate > 0.0) {
            return Err(Error::Config("log_rate must be positive".into()));
        }
        self.decimation()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if let Some(seeds) = &self.seeds {
            if seeds.len() != self.runs {
                return Err(Error::Config(format!(
                    "{} seeds given for {} runs",
                    seeds.len(),
                    self.runs
                )));
            }
        }
        if !(self.crash.max_position > 0.0 && self.crash.max_speed > 0.0) {
            return Err(Error::Config("crash limits must be positive".into()));
        }
        self.vehicle.validate()?;
        self.wind.ou.validate()?;
        self.wind.composition.validate()?;
        self.trajectory.validate()?;
        self.mapping.validate()?;
        self.pid.validate()?;
        self.asindy.gains.validate()?;
        self.asindy.adaptation.validate()?;
        self.identify.preprocess.validate()?;
        self.identify.sr3_settings()?;
        Ok(())
    }

    /// Physics steps per logged row.
    pub fn decimation(&self) -> Result<usize> {
        let ratio = 1.0 / (self.dt * self.log_rate);
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-9 * k {
            return Err(Error::Config(format!(
                "log_rate {} Hz is not an integer decimation of the {} s step",
                self.log_rate, self.dt
            )));
        }
        Ok(k as usize)
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.runs as u64).map(|i| self.base_seed + i).collect(),
        }
    }

    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_toml().as_bytes()))
    }
}
