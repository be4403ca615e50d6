//! Rope digital twin: ground a depth snapshot of a rope into an ordered
//! particle state, simulate it as a Cosserat rod with XPBD, and replay
//! recorded bimanual teleoperation to label (state, action-chunk) datasets.

pub mod extract;
pub mod knot;
pub mod math;
pub mod metrics;
pub mod par;
pub mod playback;
pub mod sim;
pub mod state;

pub use state::{ParticleState, PARTICLE_COUNT};
