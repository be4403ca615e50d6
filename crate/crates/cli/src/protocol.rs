//! Websocket messages, one JSON object per text frame, tagged by `type`.

use ropetwin::math::{quat_from_xyzw, quat_to_xyzw, Vec3};
use ropetwin::sim::GripperState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Cmd {
        arm: Side,
        pos: [f64; 3],
        quat: [f64; 4],
        open: f64,
    },
    RecordStart {
        rope_id: String,
    },
    RecordStop,
    Reset {
        #[serde(default)]
        rope: Option<String>,
        #[serde(default)]
        centerline: Option<Vec<[f64; 3]>>,
    },
    Snapshot,
}

/// A validated arm command.
#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub arm: Side,
    pub target: GripperState,
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let ClientMessage::Cmd { pos, quat, open, .. } = &msg {
            if !pos.iter().chain(quat).chain([open]).all(|v| v.is_finite()) {
                return Err("cmd fields must be finite".into());
            }
            let norm = quat.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-9 {
                return Err("cmd quaternion has zero norm".into());
            }
        }
        Ok(msg)
    }

    /// The gripper target of a `cmd`, with openness clamped to [0, 1] and
    /// the quaternion normalized.
    pub fn command(&self) -> Option<Command> {
        match *self {
            ClientMessage::Cmd { arm, pos, quat, open } => Some(Command {
                arm,
                target: GripperState::new(Vec3::from(pos), quat_from_xyzw(quat), open.clamp(0.0, 1.0)),
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperView {
    pub arm: Side,
    pub pos: [f64; 3],
    pub quat: [f64; 4],
    pub open: f64,
}

impl GripperView {
    pub fn new(arm: Side, g: &GripperState) -> Self {
        Self {
            arm,
            pos: [g.position.x, g.position.y, g.position.z],
            quat: quat_to_xyzw(&g.orientation),
            open: g.openness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        t: f64,
        particles: Vec<[f64; 3]>,
        grippers: [GripperView; 2],
        crossings: usize,
    },
    Ack {
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        state: Option<serde_json::Value>,
    },
    Error {
        code: String,
        text: String,
    },
    Recording {
        active: bool,
        rope_id: String,
        frames: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<String>,
    },
}

impl ServerMessage {
    pub fn error(code: &str, text: impl Into<String>) -> Self {
        ServerMessage::Error { code: code.into(), text: text.into() }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}
