use super::{Arm, FrameDiagnostics, GripperState, RodMaterial, SimConfig, SimError, Simulation};
use crate::extract::resample_polyline;
use crate::knot::{overhand_polyline, KnotShape};
use crate::math::{Quat, Vec3};
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone, Serialize)]
pub struct BenchFrame {
    pub ms: f64,
    #[serde(flatten)]
    pub diagnostics: FrameDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimbenchReport {
    pub particles: usize,
    pub frames: Vec<BenchFrame>,
}

impl SimbenchReport {
    pub fn median_ms(&self) -> f64 {
        let mut t: Vec<f64> = self.frames.iter().map(|f| f.ms).collect();
        if t.is_empty() {
            return 0.0;
        }
        t.sort_by(f64::total_cmp);
        let n = t.len();
        if n % 2 == 1 {
            t[n / 2]
        } else {
            0.5 * (t[n / 2 - 1] + t[n / 2])
        }
    }
}

/// Times `frames` steps of a loose overhand knot resampled to `particles`
/// whose lead end is grasped and drawn slowly across the table, so the knot
/// tightens and self-contacts stay active.
pub fn simbench(particles: usize, frames: usize, material: &RodMaterial, config: &SimConfig) -> Result<SimbenchReport, SimError> {
    if particles < 2 {
        return Err(SimError::InvalidGeometry(format!("need at least 2 particles, got {particles}")));
    }
    let dense = overhand_polyline(&KnotShape::random(0), material.radius, config.ground_height, 0.002);
    let pts = resample_polyline(&dense, particles).map_err(|e| SimError::InvalidGeometry(e.to_string()))?;
    let mut sim = Simulation::new(&pts, *material, *config)?;
    let start = pts[0];
    let away = Vec3::new(start.x, start.y, 0.0).try_normalize(1e-9).unwrap_or(Vec3::x());
    let right = GripperState::parked(Arm::Right);
    sim.place_grippers(&GripperState::new(start, Quat::identity(), 0.0), &right);
    let mut out = Vec::with_capacity(frames);
    for f in 1..=frames {
        let t = f as f64 * config.frame_dt;
        let pos = start + away * (0.05 * t) + Vec3::new(0.0, 0.0, 0.03 * (t / 2.0).min(1.0));
        let clock = Instant::now();
        let diag = *sim.step(&GripperState::new(pos, Quat::identity(), 0.0), &right)?;
        out.push(BenchFrame {
            ms: clock.elapsed().as_secs_f64() * 1e3,
            diagnostics: diag,
        });
    }
    Ok(SimbenchReport { particles, frames: out })
}
