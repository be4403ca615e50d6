//! Synthetic grasp-and-pull demonstrations over a handful of ropes, used by
//! tests, benches and the `fixture` command.

use super::demo::{ArmCommand, DemoFrame, DemoMeta, Demonstration};
use super::PlaybackError;
use crate::math::{Quat, Vec3};
use crate::sim::{Arm, GripperState};
use crate::state::{FormatError, ParticleState, PARTICLE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

pub const FIXTURE_RATE_HZ: f64 = 100.0;
pub const HELD_OUT_ROPE: &str = "rope-d";
const TRAIN_ROPES: [&str; 3] = ["rope-a", "rope-b", "rope-c"];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureDemo {
    pub id: String,
    pub demo: Demonstration,
    pub init: ParticleState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub count: usize,
    pub held_out: usize,
    /// Recording length (s).
    pub duration: f64,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            count: 96,
            held_out: 17,
            duration: 1.0,
            seed: 7,
        }
    }
}

/// Gently bent rope lying on the table, 1 cm particle spacing.
pub fn random_flat_rope(rng: &mut impl Rng, radius: f64) -> ParticleState {
    let heading = rng.gen_range(0.0..TAU);
    let bend = rng.gen_range(-1.5..1.5);
    let center = Vec3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), 0.0);
    let spacing = 0.01;
    let mut pts = Vec::with_capacity(PARTICLE_COUNT);
    let (mut p, mut theta) = (Vec3::zeros(), heading);
    for _ in 0..PARTICLE_COUNT {
        pts.push(p);
        theta += bend * spacing;
        p += Vec3::new(theta.cos(), theta.sin(), 0.0) * spacing;
    }
    let mean = pts.iter().sum::<Vec3>() / pts.len() as f64;
    let shift = center - mean + Vec3::new(0.0, 0.0, radius);
    ParticleState::new(pts.into_iter().map(|q| q + shift).collect()).expect("finite")
}

fn smooth(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Close on a particle, then drag it along `pull` (lift included) with a
/// smoothstep profile.
fn grasp_script(target: Vec3, pull: Vec3, t: f64, duration: f64) -> ArmCommand {
    let close_until = 0.2 * duration;
    let open = 1.0 - smooth(t / close_until);
    let u = smooth((t - close_until) / (duration - close_until));
    ArmCommand {
        pos: target + pull * u,
        quat: Quat::identity(),
        open,
    }
}

fn parked(side: Arm) -> ArmCommand {
    ArmCommand::from_gripper(&GripperState::parked(side))
}

fn script(rng: &mut impl Rng, init: &ParticleState, rope_id: &str, duration: f64) -> Demonstration {
    let pts = init.points();
    let n = pts.len();
    let left_idx = rng.gen_range(0..n / 4);
    let pull = |rng: &mut ChaCha8Rng| {
        let a = rng.gen_range(0.0..TAU);
        let r = rng.gen_range(0.05..0.15);
        Vec3::new(r * a.cos(), r * a.sin(), rng.gen_range(0.03..0.08))
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let left_pull = pull(&mut local);
    let bimanual = rng.gen_bool(0.5);
    let right_idx = n - 1 - rng.gen_range(0..n / 4);
    let right_pull = pull(&mut local);
    let frames = (duration * FIXTURE_RATE_HZ).round() as usize + 1;
    let frames = (0..frames)
        .map(|i| {
            let t = i as f64 / FIXTURE_RATE_HZ;
            DemoFrame {
                t,
                left: grasp_script(pts[left_idx], left_pull, t, duration),
                right: if bimanual {
                    grasp_script(pts[right_idx], right_pull, t, duration)
                } else {
                    parked(Arm::Right)
                },
            }
        })
        .collect();
    Demonstration {
        meta: DemoMeta {
            rope_id: rope_id.to_string(),
            rate_hz: FIXTURE_RATE_HZ,
        },
        frames,
    }
}

/// `spec.count` demos; the last `spec.held_out` are on [`HELD_OUT_ROPE`],
/// the rest cycle through the training ropes.
pub fn synthetic_demos(spec: &FixtureSpec, radius: f64) -> Vec<FixtureDemo> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_train = spec.count.saturating_sub(spec.held_out);
    (0..spec.count)
        .map(|i| {
            let rope = if i < n_train { TRAIN_ROPES[i % TRAIN_ROPES.len()] } else { HELD_OUT_ROPE };
            let init = random_flat_rope(&mut rng, radius);
            let demo = script(&mut rng, &init, rope, spec.duration);
            FixtureDemo {
                id: format!("demo{i:03}"),
                demo,
                init,
            }
        })
        .collect()
}

/// Writes `<id>.demo.jsonl` and `<id>.init.json` per demo; returns the demo
/// file paths.
pub fn write_fixture(demos: &[FixtureDemo], dir: &Path) -> Result<Vec<PathBuf>, PlaybackError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let mut out = Vec::with_capacity(demos.len());
    for d in demos {
        let path = dir.join(format!("{}.demo.jsonl", d.id));
        d.demo.save(&path)?;
        d.init.save(&dir.join(format!("{}.init.json", d.id)))?;
        out.push(path);
    }
    Ok(out)
}
