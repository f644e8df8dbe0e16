//! Plain-text model file.
//!
//! ```text
//! # gustbench residual-force model
//! format = gustbench-sindy
//! version = 1
//! units = N per unit feature; columns f_x f_y f_z (world ENU)
//! solver = sr3
//! setting.lambda = 5e-2
//! ...
//! threshold = 1.0000000000000000e-3
//! training_digest = <sha256>
//! n_samples = 4000
//! n_terms = 7
//! terms = 1 theta phi T*sin(theta) T*cos(theta) T*sin(phi) T*cos(phi)
//! [coefficients]
//! <n_terms rows of 3 values, 17 significant digits>
//! ```

use nalgebra::DMatrix;
use std::fmt::Write as _;
use std::path::Path;

use super::{LibrarySpec, LibraryTerm, ModelMeta, SindyModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "gustbench-sindy";
pub const MODEL_VERSION: u32 = 1;
const UNITS: &str = "N per unit feature; columns f_x f_y f_z (world ENU)";

pub fn model_to_string(model: &SindyModel) -> String {
    let mut s = String::new();
    let m = &model.meta;
    let _ = writeln!(s, "# gustbench residual-force model");
    let _ = writeln!(s, "format = {MODEL_FORMAT}");
    let _ = writeln!(s, "version = {MODEL_VERSION}");
    let _ = writeln!(s, "units = {UNITS}");
    let _ = writeln!(s, "solver = {}", m.solver);
    for (k, v) in &m.settings {
        let _ = writeln!(s, "setting.{k} = {v}");
    }
    let _ = writeln!(s, "threshold = {:.16e}", m.threshold);
    let _ = writeln!(s, "training_digest = {}", m.training_digest);
    let _ = writeln!(s, "n_samples = {}", m.n_samples);
    let _ = writeln!(s, "n_terms = {}", model.library.len());
    let _ = writeln!(s, "terms = {}", model.library.names().join(" "));
    s.push_str("[coefficients]\n");
    for row in model.xi.row_iter() {
        let vals: Vec<String> = row.iter().map(|c| format!("{c:.16e}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    s
}

pub fn model_from_str(text: &str) -> Result<SindyModel> {
    let err = |msg: String| Error::ModelLoad(msg);
    let mut lines = text.lines();
    let mut header: Vec<(String, String)> = Vec::new();
    for line in lines.by_ref() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[coefficients]" {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header line '{line}'")))?;
        header.push((k.trim().to_string(), v.trim().to_string()));
    }
    let get = |key: &str| {
        header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| err(format!("missing header field '{key}'")))
    };

    if get("format")? != MODEL_FORMAT {
        return Err(err(format!("unknown model format '{}'", get("format")?)));
    }
    let version: u32 = get("version")?
        .parse()
        .map_err(|_| err("bad version".into()))?;
    if version != MODEL_VERSION {
        return Err(err(format!(
            "model version {version} is not supported (expected {MODEL_VERSION})"
        )));
    }
    let terms: Vec<LibraryTerm> = get("terms")?
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_>>()?;
    let n_terms: usize = get("n_terms")?
        .parse()
        .map_err(|_| err("bad n_terms".into()))?;
    if n_terms != terms.len() {
        return Err(err(format!(
            "n_terms = {n_terms} but {} term names listed",
            terms.len()
        )));
    }
    let library = LibrarySpec::new(terms).map_err(|e| err(e.to_string()))?;
    let threshold: f64 = get("threshold")?
        .parse()
        .map_err(|_| err("bad threshold".into()))?;
    let n_samples: usize = get("n_samples")?
        .parse()
        .map_err(|_| err("bad n_samples".into()))?;

    let mut values: Vec<f64> = Vec::with_capacity(n_terms * 3);
    let mut n_rows = 0;
    for line in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("bad coefficient '{t}'"))))
            .collect::<Result<_>>()?;
        if row.len() != 3 {
            return Err(err(format!("coefficient row has {} values, expected 3", row.len())));
        }
        values.extend(row);
        n_rows += 1;
    }
    if n_rows != n_terms {
        return Err(err(format!(
            "header declares {n_terms} terms but the matrix has {n_rows} rows"
        )));
    }

    let settings = header
        .iter()
        .filter_map(|(k, v)| k.strip_prefix("setting.").map(|k| (k.to_string(), v.clone())))
        .collect();
    let model = SindyModel {
        library,
        xi: DMatrix::from_row_slice(n_terms, 3, &values),
        meta: ModelMeta {
            solver: get("solver")?.to_string(),
            settings,
            threshold,
            training_digest: get("training_digest")?.to_string(),
            n_samples,
        },
    };
    model.validate().map_err(|e| err(e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &SindyModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_string(model)).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_model(path: &Path) -> Result<SindyModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    model_from_str(&text).map_err(|e| e.in_file(path))
}
