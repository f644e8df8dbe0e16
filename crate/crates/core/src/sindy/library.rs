use nalgebra::DVector;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::VehicleState;

/// Candidate basis functions over attitude and collective thrust.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LibraryTerm {
    Constant,
    Pitch,
    Roll,
    ThrustSinPitch,
    ThrustCosPitch,
    ThrustSinRoll,
    ThrustCosRoll,
}

impl LibraryTerm {
    pub const ALL: [LibraryTerm; 7] = [
        LibraryTerm::Constant,
        LibraryTerm::Pitch,
        LibraryTerm::Roll,
        LibraryTerm::ThrustSinPitch,
        LibraryTerm::ThrustCosPitch,
        LibraryTerm::ThrustSinRoll,
        LibraryTerm::ThrustCosRoll,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LibraryTerm::Constant => "1",
            LibraryTerm::Pitch => "theta",
            LibraryTerm::Roll => "phi",
            LibraryTerm::ThrustSinPitch => "T*sin(theta)",
            LibraryTerm::ThrustCosPitch => "T*cos(theta)",
            LibraryTerm::ThrustSinRoll => "T*sin(phi)",
            LibraryTerm::ThrustCosRoll => "T*cos(phi)",
        }
    }

    pub fn eval(self, roll: f64, pitch: f64, thrust: f64) -> f64 {
        match self {
            LibraryTerm::Constant => 1.0,
            LibraryTerm::Pitch => pitch,
            LibraryTerm::Roll => roll,
            LibraryTerm::ThrustSinPitch => thrust * pitch.sin(),
            LibraryTerm::ThrustCosPitch => thrust * pitch.cos(),
            LibraryTerm::ThrustSinRoll => thrust * roll.sin(),
            LibraryTerm::ThrustCosRoll => thrust * roll.cos(),
        }
    }
}

impl fmt::Display for LibraryTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LibraryTerm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LibraryTerm::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::ModelLoad(format!("unknown library term '{s}'")))
    }
}

/// Ordered, duplicate-free list of terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibrarySpec {
    terms: Vec<LibraryTerm>,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self {
            terms: LibraryTerm::ALL.to_vec(),
        }
    }
}

impl LibrarySpec {
    pub fn new(terms: Vec<LibraryTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("library must have at least one term".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Config(format!("duplicate library term '{t}'")));
            }
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[LibraryTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.terms.iter().map(|t| t.name()).collect()
    }

    pub fn position(&self, term: LibraryTerm) -> Option<usize> {
        self.terms.iter().position(|t| *t == term)
    }

    pub fn eval_angles(&self, roll: f64, pitch: f64, thrust: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.eval(roll, pitch, thrust)),
        )
    }
}

/// Feature row for one sample, in library order.
pub fn eval_library(state: &VehicleState, thrust: f64, library: &LibrarySpec) -> DVector<f64> {
    library.eval_angles(state.roll(), state.pitch(), thrust)
}
