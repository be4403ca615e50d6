use super::demo::Demonstration;
use super::{proprio, PlaybackError};
use crate::extract::resample_polyline;
use crate::math::{quat_from_xyzw, quat_to_xyzw, Vec3};
use crate::par::{self, Execution};
use crate::sim::{init_rod, Arm, Attachment, GripperState, RodMaterial, SimConfig, Simulation};
use crate::state::{ActionRow, FormatError, ParticleState, PARTICLE_COUNT};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFrame {
    pub t: f64,
    pub state: ParticleState,
    pub left: GripperState,
    pub right: GripperState,
    /// The demo frame applied to reach this state (frame 0: the pose the
    /// grippers were placed at).
    pub action: ActionRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrajectory {
    pub demo: String,
    pub rope_id: String,
    pub frames: Vec<TrajectoryFrame>,
}

fn canonical_state(positions: &[Vec3]) -> Result<ParticleState, PlaybackError> {
    if positions.len() == PARTICLE_COUNT {
        return Ok(ParticleState::new(positions.to_vec())?);
    }
    let pts = resample_polyline(positions, PARTICLE_COUNT).map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(ParticleState::new(pts)?)
}

/// Re-executes a 30 Hz demonstration from `init`.
///
/// Frame 0 is the initial rope with the grippers placed at the first demo
/// pose. Every later frame is the result of one `step_frame` toward the
/// demo frame with the same index, so trajectory length equals demo length
/// (one frame for an empty demo).
pub fn replay(demo_id: &str, demo30: &Demonstration, init: &[Vec3], material: &RodMaterial, config: &SimConfig) -> Result<LabeledTrajectory, PlaybackError> {
    let state = init_rod(init, material, config)?;
    let mut sim = Simulation::from_state(state, *material, *config);
    let (left0, right0) = match demo30.frames.first() {
        Some(f) => (f.left.gripper(), f.right.gripper()),
        None => (GripperState::parked(Arm::Left), GripperState::parked(Arm::Right)),
    };
    sim.place_grippers(&left0, &right0);
    let t0 = demo30.frames.first().map_or(0.0, |f| f.t);
    let mut frames = vec![TrajectoryFrame {
        t: t0,
        state: canonical_state(&sim.state.positions)?,
        left: left0.clone(),
        right: right0.clone(),
        action: proprio(&left0, &right0),
    }];
    for (i, f) in demo30.frames.iter().enumerate().skip(1) {
        sim.step(&f.left.gripper(), &f.right.gripper())
            .map_err(|source| PlaybackError::Simulation { frame: i, source })?;
        frames.push(TrajectoryFrame {
            t: t0 + i as f64 * config.frame_dt,
            state: canonical_state(&sim.state.positions)?,
            left: sim.grippers[0].clone(),
            right: sim.grippers[1].clone(),
            action: f.row(),
        });
    }
    Ok(LabeledTrajectory {
        demo: demo_id.to_string(),
        rope_id: demo30.meta.rope_id.clone(),
        frames,
    })
}

pub struct ReplayJob<'a> {
    pub demo_id: String,
    pub demo30: &'a Demonstration,
    pub init: &'a [Vec3],
}

/// Independent replays, one simulator each; results keep job order.
pub fn replay_batch(jobs: &[ReplayJob<'_>], material: &RodMaterial, config: &SimConfig, exec: Execution) -> Vec<Result<LabeledTrajectory, PlaybackError>> {
    par::map(exec, jobs, |j| replay(&j.demo_id, j.demo30, j.init, material, config))
}

pub const TRAJ_FORMAT: &str = "traj-v1";

#[derive(Serialize, Deserialize)]
struct TrajMeta {
    format: String,
    demo: String,
    rope_id: String,
    frames: usize,
}

#[derive(Serialize, Deserialize)]
struct GripperLine {
    pos: [f64; 3],
    quat: [f64; 4],
    open: f64,
    attached: Option<usize>,
    offset: Option<[f64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    t: f64,
    state: Vec<[f64; 3]>,
    left: GripperLine,
    right: GripperLine,
    action: Vec<f64>,
}

fn gripper_line(g: &GripperState) -> GripperLine {
    GripperLine {
        pos: [g.position.x, g.position.y, g.position.z],
        quat: quat_to_xyzw(&g.orientation),
        open: g.openness,
        attached: g.attachment.map(|a| a.particle),
        offset: g.attachment.map(|a| [a.offset.x, a.offset.y, a.offset.z]),
    }
}

fn gripper_state(l: &GripperLine) -> GripperState {
    let mut g = GripperState::new(Vec3::from(l.pos), quat_from_xyzw(l.quat), l.open);
    if let (Some(particle), Some(o)) = (l.attached, l.offset) {
        g.attachment = Some(Attachment {
            particle,
            offset: Vec3::from(o),
        });
    }
    g
}

/// Writes `meta.json` and `frames.jsonl` into `dir`.
pub fn write_trajectory(traj: &LabeledTrajectory, dir: &Path) -> Result<(), PlaybackError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let meta = TrajMeta {
        format: TRAJ_FORMAT.into(),
        demo: traj.demo.clone(),
        rope_id: traj.rope_id.clone(),
        frames: traj.frames.len(),
    };
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("plain data")).map_err(|e| FormatError::io(&meta_path, e))?;
    let path = dir.join("frames.jsonl");
    let file = std::fs::File::create(&path).map_err(|e| FormatError::io(&path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for f in &traj.frames {
        let line = FrameLine {
            t: f.t,
            state: f.state.to_rows(),
            left: gripper_line(&f.left),
            right: gripper_line(&f.right),
            action: f.action.to_vec(),
        };
        serde_json::to_writer(&mut w, &line).expect("plain data");
        w.write_all(b"\n").map_err(|e| FormatError::io(&path, e))?;
    }
    w.flush().map_err(|e| FormatError::io(&path, e))?;
    Ok(())
}

pub fn read_trajectory(dir: &Path) -> Result<LabeledTrajectory, PlaybackError> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| FormatError::io(&meta_path, e))?;
    let meta: TrajMeta = serde_json::from_str(&text).map_err(|e| FormatError::parse(&meta_path, e.line(), e))?;
    if meta.format != TRAJ_FORMAT {
        return Err(FormatError::parse(&meta_path, 1, format!("unknown format {:?}", meta.format)).into());
    }
    let path = dir.join("frames.jsonl");
    let text = std::fs::read_to_string(&path).map_err(|e| FormatError::io(&path, e))?;
    let mut frames = Vec::with_capacity(meta.frames);
    for (i, l) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line: FrameLine = serde_json::from_str(l).map_err(|e| FormatError::parse(&path, i + 1, e))?;
        let action: ActionRow = line
            .action
            .as_slice()
            .try_into()
            .map_err(|_| FormatError::parse(&path, i + 1, "action row must have 16 entries"))?;
        frames.push(TrajectoryFrame {
            t: line.t,
            state: ParticleState::from_rows(&line.state).map_err(|e| FormatError::parse(&path, i + 1, e))?,
            left: gripper_state(&line.left),
            right: gripper_state(&line.right),
            action,
        });
    }
    if frames.len() != meta.frames {
        return Err(FormatError::parse(&meta_path, 1, format!("meta says {} frames, file has {}", meta.frames, frames.len())).into());
    }
    Ok(LabeledTrajectory {
        demo: meta.demo,
        rope_id: meta.rope_id,
        frames,
    })
}
