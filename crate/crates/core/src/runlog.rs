//! Per-run time series and its CSV form.
//!
//! The CSV starts with a schema comment line, then a fixed header. Floats
//! are written with 17 significant digits so a read-back is bit-exact.

use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sim::{ControlCommand, VehicleState};
use crate::trajectory::ReferenceSample;

pub const SCHEMA_LINE: &str = "# gustbench-runlog v1";

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RunEvent {
    #[default]
    None,
    /// Degenerate desired force; the safe hover command was sent.
    Fallback,
    Crash(String),
}

impl RunEvent {
    fn encode(&self) -> String {
        match self {
            RunEvent::None => String::new(),
            RunEvent::Fallback => "fallback".into(),
            RunEvent::Crash(why) => format!("crash:{why}"),
        }
    }

    fn decode(s: &str) -> Result<Self> {
        match s {
            "" => Ok(RunEvent::None),
            "fallback" => Ok(RunEvent::Fallback),
            _ => s
                .strip_prefix("crash:")
                .map(|why| RunEvent::Crash(why.to_string()))
                .ok_or_else(|| Error::Data(format!("unknown event marker '{s}'"))),
        }
    }
}

/// Controller internals recorded alongside the state. Zero for the PID arm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DebugColumns {
    pub f_dist: Vector3<f64>,
    pub f_hat: Vector3<f64>,
    pub s: Vector3<f64>,
    pub e_p: Vector3<f64>,
    pub e_v: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub reference: ReferenceSample,
    pub state: VehicleState,
    pub command: ControlCommand,
    pub f_wind: Vector3<f64>,
    pub a_wind: Vector3<f64>,
    pub debug: DebugColumns,
    pub event: RunEvent,
}

impl RunRow {
    pub fn t(&self) -> f64 {
        self.state.t
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunLog {
    pub rows: Vec<RunRow>,
}

const VEC_COLUMNS: [&str; 15] = [
    "pd", "vd", "ad", "p", "v", "eta", "omega", "att_des", "f_wind", "a_wind", "f_dist", "f_hat",
    "s", "e_p", "e_v",
];

pub fn header() -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for name in VEC_COLUMNS {
        // thrust sits between omega and att_des
        if name == "att_des" {
            cols.push("thrust".into());
        }
        let axes = if matches!(name, "eta" | "att_des") {
            ["roll", "pitch", "yaw"]
        } else {
            ["x", "y", "z"]
        };
        for a in axes {
            cols.push(format!("{name}_{a}"));
        }
    }
    cols.push("event".into());
    cols
}

fn fmt_f64(out: &mut String, x: f64) {
    let _ = write!(out, "{x:.16e}");
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("bad number '{s}'")))
}

impl RunLog {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.t())
    }

    pub fn crash(&self) -> Option<&str> {
        self.rows.iter().rev().find_map(|r| match &r.event {
            RunEvent::Crash(why) => Some(why.as_str()),
            _ => None,
        })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(header())?;
        let mut field = String::new();
        for row in &self.rows {
            let vecs: [&Vector3<f64>; 15] = [
                &row.reference.p_d,
                &row.reference.v_d,
                &row.reference.a_d,
                &row.state.p,
                &row.state.v,
                &row.state.eta,
                &row.state.omega,
                &row.command.att_des,
                &row.f_wind,
                &row.a_wind,
                &row.debug.f_dist,
                &row.debug.f_hat,
                &row.debug.s,
                &row.debug.e_p,
                &row.debug.e_v,
            ];
            let mut rec: Vec<String> = Vec::with_capacity(50);
            let mut push = |x: f64, rec: &mut Vec<String>| {
                field.clear();
                fmt_f64(&mut field, x);
                rec.push(field.clone());
            };
            push(row.t(), &mut rec);
            for (i, v) in vecs.iter().enumerate() {
                if i == 7 {
                    push(row.command.thrust, &mut rec);
                }
                for k in 0..3 {
                    push(v[k], &mut rec);
                }
            }
            rec.push(row.event.encode());
            wtr.write_record(&rec)?;
        }
        let body = wtr
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let mut out = String::with_capacity(body.len() + SCHEMA_LINE.len() + 1);
        out.push_str(SCHEMA_LINE);
        out.push('\n');
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        if first.trim_end() != SCHEMA_LINE {
            return Err(Error::Data(format!(
                "unsupported run log schema '{}', expected '{SCHEMA_LINE}'",
                first.trim_end()
            )));
        }
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(rest.as_bytes());
        let expected = header();
        let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if got != expected {
            return Err(Error::Data("run log header does not match schema v1".into()));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            if rec.len() != expected.len() {
                return Err(Error::Data(format!(
                    "row has {} fields, expected {}",
                    rec.len(),
                    expected.len()
                )));
            }
            let nums: Vec<f64> = (0..expected.len() - 1)
                .map(|i| parse_f64(&rec[i]))
                .collect::<Result<_>>()?;
            let v3 = |start: usize| Vector3::new(nums[start], nums[start + 1], nums[start + 2]);
            // Column offsets follow `header()`: t, then 7 vectors, thrust, then 8 vectors.
            let t = nums[0];
            let reference = ReferenceSample {
                t,
                p_d: v3(1),
                v_d: v3(4),
                a_d: v3(7),
            };
            let state = VehicleState {
                t,
                p: v3(10),
                v: v3(13),
                eta: v3(16),
                omega: v3(19),
            };
            let command = ControlCommand {
                thrust: nums[22],
                att_des: v3(23),
            };
            rows.push(RunRow {
                reference,
                state,
                command,
                f_wind: v3(26),
                a_wind: v3(29),
                debug: DebugColumns {
                    f_dist: v3(32),
                    f_hat: v3(35),
                    s: v3(38),
                    e_p: v3(41),
                    e_v: v3(44),
                },
                event: RunEvent::decode(&rec[expected.len() - 1])?,
            });
        }
        Ok(RunLog { rows })
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_csv_str(&text).map_err(|e| e.in_file(path))
    }

    /// Checks strictly increasing time and a constant rate within `jitter`
    /// (relative). Returns the nominal sample period.
    pub fn check_uniform(&self, jitter: f64) -> Result<f64> {
        if self.rows.len() < 2 {
            return Err(Error::Data("run log has fewer than two rows".into()));
        }
        let t0 = self.rows[0].t();
        let t1 = self.rows[self.rows.len() - 1].t();
        let nominal = (t1 - t0) / (self.rows.len() - 1) as f64;
        for w in self.rows.windows(2) {
            let d = w[1].t() - w[0].t();
            if !(d > 0.0) {
                return Err(Error::Data(format!(
                    "timestamps not strictly increasing at t = {}",
                    w[1].t()
                )));
            }
            if (d - nominal).abs() > jitter * nominal {
                return Err(Error::Data(format!(
                    "sample spacing {d} deviates from nominal {nominal} by more than {:.0}%",
                    jitter * 100.0
                )));
            }
        }
        Ok(nominal)
    }
}
