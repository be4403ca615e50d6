//! Demonstration replay and dataset labeling.
//!
//! Recorded bimanual commands are resampled to the simulation rate,
//! re-executed on a rod grounded from a snapshot, and cut into
//! (state, proprioception, k future actions) chunks split by rope.

mod chunks;
mod dataset;
mod demo;
pub mod fixture;
mod replay;

pub use chunks::{extract_chunks, read_chunks, write_chunks, ChunkSet, StateActionChunk};
pub use dataset::{export_dataset, read_split, split_demos, DemoChunks, Manifest, SplitConfig, SplitCounts, Splits};
pub use demo::{demo_id, load_demonstration, resample_demo, ArmCommand, DemoFrame, DemoMeta, Demonstration, DEMO_FORMAT};
pub use replay::{read_trajectory, replay, replay_batch, write_trajectory, LabeledTrajectory, ReplayJob, TrajectoryFrame};

use crate::math::{quat_from_xyzw, quat_to_xyzw, Quat, Vec3};
use nalgebra::Quaternion;
use crate::sim::{GripperState, SimError};
use crate::state::{ActionRow, FormatError};
use thiserror::Error;

/// Simulation rate demonstrations are resampled to.
pub const SIM_RATE_HZ: f64 = 30.0;

#[derive(Debug, Error)]
pub enum PlaybackError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("line {line}: time {t} does not increase (previous {prev})")]
    Ordering { line: usize, t: f64, prev: f64 },
    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },
    #[error("demonstration has {frames} frames, need at least 2")]
    TooShort { frames: usize },
    #[error("simulation failed at frame {frame}: {source}")]
    Simulation {
        frame: usize,
        #[source]
        source: SimError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("split: {0}")]
    Split(String),
}

/// Bimanual 16-vector `[L pos, L quat xyzw, L open, R pos, R quat xyzw, R open]`.
pub fn proprio(left: &GripperState, right: &GripperState) -> ActionRow {
    row_from_commands(&ArmCommand::from_gripper(left), &ArmCommand::from_gripper(right))
}

pub(crate) fn row_from_commands(left: &ArmCommand, right: &ArmCommand) -> ActionRow {
    let mut row = [0.0; 16];
    for (k, a) in [left, right].into_iter().enumerate() {
        let o = 8 * k;
        row[o..o + 3].copy_from_slice(a.pos.as_slice());
        row[o + 3..o + 7].copy_from_slice(&quat_to_xyzw(&a.quat));
        row[o + 7] = a.open;
    }
    row
}

/// Inverse of [`proprio`] (attachments are not part of the row).
pub fn grippers_from_row(row: &ActionRow) -> (GripperState, GripperState) {
    let arm = |o: usize| {
        let pos = Vec3::new(row[o], row[o + 1], row[o + 2]);
        let xyzw = [row[o + 3], row[o + 4], row[o + 5], row[o + 6]];
        let norm = xyzw.iter().map(|v| v * v).sum::<f64>().sqrt();
        // rows written from unit quaternions are kept bit-exact
        let q = if (norm - 1.0).abs() < 1e-12 {
            Quat::new_unchecked(Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]))
        } else {
            quat_from_xyzw(xyzw)
        };
        GripperState::new(pos, q, row[o + 7])
    };
    (arm(0), arm(8))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proprio_layout() {
        let g = GripperState::new(Vec3::zeros(), Quat::identity(), 1.0);
        let row = proprio(&g, &g);
        assert_eq!(row, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let l = GripperState::new(Vec3::new(0.1, 0.2, 0.3), Quat::identity(), 1.0);
        let row2 = proprio(&l, &g);
        assert_eq!(&row2[..3], &[0.1, 0.2, 0.3]);
        assert_eq!(&row2[8..], &row[8..]);
    }
}
