use super::replay::LabeledTrajectory;
use super::PlaybackError;
use crate::state::{ActionRow, FormatError, ParticleState};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// One training sample: rope state and proprioception at `frame`, plus the
/// next `k` commanded rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StateActionChunk {
    pub demo: String,
    pub frame: usize,
    pub state: ParticleState,
    pub q: ActionRow,
    pub actions: Vec<ActionRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSet {
    pub chunks: Vec<StateActionChunk>,
    /// Set when the trajectory was too short for a single chunk.
    pub too_short: bool,
}

/// Starts `0, stride, 2·stride, …` while `start + k` is still a frame.
pub fn extract_chunks(traj: &LabeledTrajectory, k: usize, stride: usize) -> ChunkSet {
    let k = k.max(1);
    let stride = stride.max(1);
    let n = traj.frames.len();
    if n < k + 1 {
        return ChunkSet { chunks: Vec::new(), too_short: true };
    }
    let chunks = (0..n - k)
        .step_by(stride)
        .map(|i| {
            let f = &traj.frames[i];
            StateActionChunk {
                demo: traj.demo.clone(),
                frame: i,
                state: f.state.clone(),
                q: super::proprio(&f.left, &f.right),
                actions: traj.frames[i + 1..=i + k].iter().map(|g| g.action).collect(),
            }
        })
        .collect();
    ChunkSet { chunks, too_short: false }
}

#[derive(Serialize, Deserialize)]
struct ChunkLine {
    demo: String,
    frame: usize,
    state: Vec<[f64; 3]>,
    q: Vec<f64>,
    actions: Vec<Vec<f64>>,
}

fn row(v: &[f64], path: &Path, line: usize) -> Result<ActionRow, FormatError> {
    v.try_into()
        .map_err(|_| FormatError::parse(path, line, format!("expected 16 values, got {}", v.len())))
}

pub fn write_chunks(chunks: &[StateActionChunk], path: &Path) -> Result<(), PlaybackError> {
    let file = std::fs::File::create(path).map_err(|e| FormatError::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for c in chunks {
        let line = ChunkLine {
            demo: c.demo.clone(),
            frame: c.frame,
            state: c.state.to_rows(),
            q: c.q.to_vec(),
            actions: c.actions.iter().map(|a| a.to_vec()).collect(),
        };
        serde_json::to_writer(&mut w, &line).expect("plain data");
        w.write_all(b"\n").map_err(|e| FormatError::io(path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(path, e))?;
    Ok(())
}

pub fn read_chunks(path: &Path) -> Result<Vec<StateActionChunk>, PlaybackError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let c: ChunkLine = serde_json::from_str(l).map_err(|e| FormatError::parse(path, line, e))?;
        out.push(StateActionChunk {
            demo: c.demo,
            frame: c.frame,
            state: ParticleState::from_rows(&c.state).map_err(|e| FormatError::parse(path, line, e))?,
            q: row(&c.q, path, line)?,
            actions: c.actions.iter().map(|a| row(a, path, line)).collect::<Result<_, _>>()?,
        });
    }
    Ok(out)
}
