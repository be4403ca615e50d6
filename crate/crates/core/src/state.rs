//! The canonical grounded observation: 100 ordered particles, uniformly
//! spaced in arc length, plus its `particles-v1` JSON file format.

use crate::math::Vec3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const PARTICLE_COUNT: usize = 100;

/// Width of a bimanual action or proprioception row:
/// `[L pos(3), L quat xyzw(4), L open, R pos(3), R quat xyzw(4), R open]`.
pub const ACTION_DIM: usize = 16;
pub type ActionRow = [f64; ACTION_DIM];

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

impl FormatError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, line: usize, msg: impl ToString) -> Self {
        FormatError::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    points: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct StateFile {
    format: String,
    points: Vec<[f64; 3]>,
}

const STATE_FORMAT: &str = "particles-v1";

impl ParticleState {
    /// Wraps exactly [`PARTICLE_COUNT`] finite points.
    pub fn new(points: Vec<Vec3>) -> Result<Self, FormatError> {
        if points.len() != PARTICLE_COUNT {
            return Err(FormatError::Invalid(format!(
                "particle state needs {PARTICLE_COUNT} points, got {}",
                points.len()
            )));
        }
        if !points.iter().all(crate::math::all_finite) {
            return Err(FormatError::Invalid("particle state has non-finite coordinates".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        Self {
            points: self.points.iter().map(|p| p + t).collect(),
        }
    }

    pub fn to_rows(&self) -> Vec<[f64; 3]> {
        self.points.iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self, FormatError> {
        Self::new(rows.iter().map(|r| Vec3::new(r[0], r[1], r[2])).collect())
    }

    pub fn to_json(&self) -> String {
        let file = StateFile {
            format: STATE_FORMAT.into(),
            points: self.to_rows(),
        };
        serde_json::to_string(&file).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let file: StateFile =
            serde_json::from_str(text).map_err(|e| FormatError::Invalid(e.to_string()))?;
        if file.format != STATE_FORMAT {
            return Err(FormatError::Invalid(format!("unknown state format {:?}", file.format)));
        }
        Self::from_rows(&file.points)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            FormatError::Invalid(msg) => FormatError::parse(path, 1, msg),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        std::fs::write(path, self.to_json()).map_err(|e| FormatError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> ParticleState {
        ParticleState::new((0..100).map(|i| Vec3::new(i as f64 / 99.0, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = line().translated(&Vec3::new(0.1, -0.3, 1.0 / 3.0));
        assert_eq!(ParticleState::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn wrong_count_is_rejected() {
        assert!(ParticleState::new(vec![Vec3::zeros(); 99]).is_err());
        assert!(ParticleState::from_json(r#"{"format":"particles-v2","points":[]}"#).is_err());
    }
}
