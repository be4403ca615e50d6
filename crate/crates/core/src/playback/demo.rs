use super::PlaybackError;
use crate::math::{quat_from_xyzw, quat_to_xyzw, slerp_shortest, Quat, Vec3};
use crate::sim::GripperState;
use crate::state::{ActionRow, FormatError};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const DEMO_FORMAT: &str = "demo-v1";
/// Tolerated deviation of a quaternion norm from one before rejecting it.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

/// Commanded pose and openness of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmCommand {
    pub pos: Vec3,
    pub quat: Quat,
    pub open: f64,
}

impl ArmCommand {
    pub fn gripper(&self) -> GripperState {
        GripperState::new(self.pos, self.quat, self.open)
    }

    pub fn from_gripper(g: &GripperState) -> Self {
        Self {
            pos: g.position,
            quat: g.orientation,
            open: g.openness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoFrame {
    pub t: f64,
    pub left: ArmCommand,
    pub right: ArmCommand,
}

impl DemoFrame {
    pub fn row(&self) -> ActionRow {
        super::row_from_commands(&self.left, &self.right)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoMeta {
    pub rope_id: String,
    pub rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub meta: DemoMeta,
    pub frames: Vec<DemoFrame>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine {
    format: String,
    rope_id: String,
    rate_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct ArmLine {
    pos: [f64; 3],
    quat: [f64; 4],
    open: f64,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    t: f64,
    left: ArmLine,
    right: ArmLine,
}

fn arm_line(a: &ArmCommand) -> ArmLine {
    ArmLine {
        pos: [a.pos.x, a.pos.y, a.pos.z],
        quat: quat_to_xyzw(&a.quat),
        open: a.open,
    }
}

fn arm_command(a: &ArmLine, line: usize) -> Result<ArmCommand, PlaybackError> {
    let finite = a.pos.iter().chain(&a.quat).all(|v| v.is_finite()) && a.open.is_finite();
    if !finite {
        return Err(PlaybackError::Validation { line, msg: "non-finite value".into() });
    }
    let norm = a.quat.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > QUAT_NORM_TOLERANCE {
        return Err(PlaybackError::Validation {
            line,
            msg: format!("quaternion norm {norm} is not unit"),
        });
    }
    if !(0.0..=1.0).contains(&a.open) {
        return Err(PlaybackError::Validation {
            line,
            msg: format!("openness {} outside [0, 1]", a.open),
        });
    }
    Ok(ArmCommand {
        pos: Vec3::from(a.pos),
        quat: quat_from_xyzw(a.quat),
        open: a.open,
    })
}

impl Demonstration {
    /// Parses a `demo-v1` JSON-lines document. `origin` names the source
    /// in error messages.
    pub fn parse(text: &str, origin: &Path) -> Result<Self, PlaybackError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines
            .next()
            .ok_or_else(|| PlaybackError::Format(FormatError::parse(origin, 1, "empty demonstration file")))?;
        let meta: MetaLine = serde_json::from_str(first).map_err(|e| FormatError::parse(origin, 1, e))?;
        if meta.format != DEMO_FORMAT {
            return Err(FormatError::parse(origin, 1, format!("unknown format {:?}", meta.format)).into());
        }
        if !(meta.rate_hz.is_finite() && meta.rate_hz > 0.0) {
            return Err(PlaybackError::Validation { line: 1, msg: "rate_hz must be positive".into() });
        }
        let mut frames: Vec<DemoFrame> = Vec::new();
        for (i, text) in lines {
            let line = i + 1;
            let f: FrameLine = serde_json::from_str(text).map_err(|e| FormatError::parse(origin, line, e))?;
            if !f.t.is_finite() {
                return Err(PlaybackError::Validation { line, msg: "non-finite time".into() });
            }
            if let Some(prev) = frames.last() {
                if f.t <= prev.t {
                    return Err(PlaybackError::Ordering { line, t: f.t, prev: prev.t });
                }
                // declared rate is authoritative; half a period of jitter is tolerated
                let dt = f.t - prev.t;
                let period = 1.0 / meta.rate_hz;
                if (dt - period).abs() > 0.5 * period {
                    return Err(PlaybackError::Validation {
                        line,
                        msg: format!("frame interval {dt} s does not match declared {} Hz", meta.rate_hz),
                    });
                }
            }
            frames.push(DemoFrame {
                t: f.t,
                left: arm_command(&f.left, line)?,
                right: arm_command(&f.right, line)?,
            });
        }
        Ok(Self {
            meta: DemoMeta {
                rope_id: meta.rope_id,
                rate_hz: meta.rate_hz,
            },
            frames,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let meta = MetaLine {
            format: DEMO_FORMAT.into(),
            rope_id: self.meta.rope_id.clone(),
            rate_hz: self.meta.rate_hz,
        };
        let mut out = serde_json::to_string(&meta).expect("plain data");
        out.push('\n');
        for f in &self.frames {
            let line = FrameLine {
                t: f.t,
                left: arm_line(&f.left),
                right: arm_line(&f.right),
            };
            out.push_str(&serde_json::to_string(&line).expect("plain data"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), PlaybackError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| FormatError::io(path, e).into())
    }
}

pub fn load_demonstration(path: &Path) -> Result<Demonstration, PlaybackError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    Demonstration::parse(&text, path)
}

/// Demo id from a file name: the part before the first `.`.
pub fn demo_id(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.split('.').next().unwrap_or_default().to_string()
}

fn lerp_arm(a: &ArmCommand, b: &ArmCommand, u: f64) -> ArmCommand {
    ArmCommand {
        pos: a.pos + (b.pos - a.pos) * u,
        quat: slerp_shortest(&a.quat, &b.quat, u),
        open: a.open + (b.open - a.open) * u,
    }
}

/// Uniform grid `t0 + i / target_hz` up to the last source time; positions
/// and openness interpolated linearly, orientations by shortest-arc slerp.
pub fn resample_demo(demo: &Demonstration, target_hz: f64) -> Result<Demonstration, PlaybackError> {
    if demo.frames.len() < 2 {
        return Err(PlaybackError::TooShort { frames: demo.frames.len() });
    }
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(PlaybackError::Validation { line: 0, msg: "target rate must be positive".into() });
    }
    let src = &demo.frames;
    let t0 = src[0].t;
    let span = src[src.len() - 1].t - t0;
    let count = (span * target_hz + 1e-9).floor() as usize + 1;
    let mut frames = Vec::with_capacity(count);
    let mut k = 0;
    for i in 0..count {
        let t = t0 + i as f64 / target_hz;
        while k + 2 < src.len() && src[k + 1].t <= t {
            k += 1;
        }
        let (a, b) = (&src[k], &src[k + 1]);
        let u = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        frames.push(DemoFrame {
            t,
            left: lerp_arm(&a.left, &b.left, u),
            right: lerp_arm(&a.right, &b.right, u),
        });
    }
    Ok(Demonstration {
        meta: DemoMeta {
            rope_id: demo.meta.rope_id.clone(),
            rate_hz: target_hz,
        },
        frames,
    })
}
