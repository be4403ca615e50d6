//! Teleoperation service: one simulation thread ticking at 30 Hz, websocket
//! clients feeding it through a queue and reading states from a broadcast.

use crate::protocol::{ClientMessage, Command, GripperView, ServerMessage, Side};
use crate::CliError;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use ropetwin::extract::resample_polyline;
use ropetwin::knot::settled_overhand_state;
use ropetwin::math::Vec3;
use ropetwin::metrics::crossings;
use ropetwin::playback::{ArmCommand, DemoFrame, DemoMeta, Demonstration, SIM_RATE_HZ};
use ropetwin::sim::{init_rod, Arm, GripperState, RodMaterial, SimConfig, SimError, Simulation};
use ropetwin::{ParticleState, PARTICLE_COUNT};
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};
use tokio::sync::{broadcast, mpsc};

pub struct Settings {
    pub host: String,
    pub port: u16,
    pub rope: String,
    pub record_dir: PathBuf,
    pub material: RodMaterial,
    pub config: SimConfig,
}

type Reply = mpsc::UnboundedSender<ServerMessage>;

#[derive(Clone)]
struct Shared {
    inbox: std::sync::mpsc::Sender<(ClientMessage, Reply)>,
    states: broadcast::Sender<Arc<str>>,
}

pub async fn run(settings: Settings) -> Result<(), CliError> {
    let presets = Presets::new(settings.material.radius, settings.config.ground_height)?;
    let initial = presets.get(&settings.rope).ok_or_else(|| CliError::Serve(format!("unknown rope preset {:?}", settings.rope)))?;
    let listener = tokio::net::TcpListener::bind((settings.host.as_str(), settings.port))
        .await
        .map_err(|e| CliError::Serve(format!("cannot listen on {}:{}: {e}", settings.host, settings.port)))?;
    let addr = listener.local_addr().map_err(|e| CliError::Serve(e.to_string()))?;

    let (inbox, queue) = std::sync::mpsc::channel();
    let (states, _) = broadcast::channel(8);
    let mut loop_state = Loop::new(initial, presets, settings.record_dir, settings.material, settings.config, states.clone())?;
    std::thread::Builder::new()
        .name("sim".into())
        .spawn(move || loop_state.run(queue))
        .map_err(|e| CliError::Serve(e.to_string()))?;

    let app = Router::new()
        .route("/healthz", get(|| async { "ok" }))
        .route("/ws", get(upgrade))
        .with_state(Shared { inbox, states });
    println!("listening on {addr}");
    let _ = std::io::stdout().flush();
    axum::serve(listener, app).await.map_err(|e| CliError::Serve(e.to_string()))
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, shared))
}

async fn client(socket: WebSocket, shared: Shared) {
    let (mut sink, mut stream) = socket.split();
    let (reply, mut replies) = mpsc::unbounded_channel::<ServerMessage>();
    let mut states = shared.states.subscribe();
    let writer = tokio::spawn(async move {
        loop {
            let text: Arc<str> = tokio::select! {
                r = replies.recv() => match r {
                    Some(m) => m.to_text().into(),
                    None => break,
                },
                s = states.recv() => match s {
                    Ok(t) => t,
                    // a slow client skips frames
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            };
            if sink.send(Message::Text(text.as_ref().into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Binary(_) => {
                let _ = reply.send(ServerMessage::error("bad_message", "expected a text frame"));
                continue;
            }
            Message::Close(_) => break,
            _ => continue,
        };
        match ClientMessage::parse(&text) {
            Ok(m) => {
                if shared.inbox.send((m, reply.clone())).is_err() {
                    break;
                }
            }
            Err(e) => {
                let _ = reply.send(ServerMessage::error("bad_message", e));
            }
        }
    }
    drop(reply);
    writer.abort();
}

struct Presets {
    knot: ParticleState,
    straight: ParticleState,
}

impl Presets {
    fn new(radius: f64, ground: f64) -> Result<Self, CliError> {
        let z = ground + radius;
        let straight = (0..PARTICLE_COUNT).map(|i| Vec3::new(0.01 * i as f64 - 0.495, 0.0, z)).collect();
        Ok(Self { knot: settled_overhand_state(0)?, straight: ParticleState::new(straight)? })
    }

    fn get(&self, name: &str) -> Option<ParticleState> {
        match name {
            "knot" => Some(self.knot.clone()),
            "straight" => Some(self.straight.clone()),
            _ => None,
        }
    }
}

struct Recording {
    rope_id: String,
    init: ParticleState,
    frames: Vec<DemoFrame>,
}

/// Everything the simulation thread owns.
struct Loop {
    sim: Simulation,
    presets: Presets,
    rope: ParticleState,
    targets: [GripperState; 2],
    tick: u64,
    recording: Option<Recording>,
    record_dir: PathBuf,
    states: broadcast::Sender<Arc<str>>,
}

fn parked() -> [GripperState; 2] {
    [GripperState::parked(Arm::Left), GripperState::parked(Arm::Right)]
}

fn canonical(sim: &Simulation) -> Result<ParticleState, String> {
    let p = &sim.state.positions;
    let pts = if p.len() == PARTICLE_COUNT { p.clone() } else { resample_polyline(p, PARTICLE_COUNT).map_err(|e| e.to_string())? };
    ParticleState::new(pts).map_err(|e| e.to_string())
}

impl Loop {
    fn new(
        rope: ParticleState,
        presets: Presets,
        record_dir: PathBuf,
        material: RodMaterial,
        config: SimConfig,
        states: broadcast::Sender<Arc<str>>,
    ) -> Result<Self, SimError> {
        let targets = parked();
        let sim = Self::fresh(&rope, &targets, material, config)?;
        Ok(Self { sim, presets, rope, targets, tick: 0, recording: None, record_dir, states })
    }

    fn fresh(rope: &ParticleState, targets: &[GripperState; 2], material: RodMaterial, config: SimConfig) -> Result<Simulation, SimError> {
        let mut sim = Simulation::from_state(init_rod(rope.points(), &material, &config)?, material, config);
        sim.place_grippers(&targets[0], &targets[1]);
        Ok(sim)
    }

    fn run(&mut self, queue: std::sync::mpsc::Receiver<(ClientMessage, Reply)>) {
        let period = Duration::from_secs_f64(self.sim.config.frame_dt);
        let mut deadline = Instant::now() + period;
        loop {
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            }
            deadline += period;
            if Instant::now() > deadline {
                // fell a full period behind: skip the missed ticks
                deadline = Instant::now() + period;
            }
            let mut start = None;
            loop {
                match queue.try_recv() {
                    Ok((msg, reply)) => {
                        if let Some(rope_id) = self.handle(msg, &reply) {
                            start = Some((rope_id, reply));
                        }
                    }
                    Err(std::sync::mpsc::TryRecvError::Empty) => break,
                    Err(std::sync::mpsc::TryRecvError::Disconnected) => return,
                }
            }
            self.tick(start);
        }
    }

    /// Applies one queued message. Returns the rope id of a recording that
    /// should start once this tick has stepped.
    fn handle(&mut self, msg: ClientMessage, reply: &Reply) -> Option<String> {
        let send = |m: ServerMessage| {
            let _ = reply.send(m);
        };
        if let Some(Command { arm, target }) = msg.command() {
            self.targets[arm.index()] = target;
            return None;
        }
        match msg {
            ClientMessage::Cmd { .. } => unreachable!("handled above"),
            ClientMessage::Snapshot => match canonical(&self.sim) {
                Ok(s) => {
                    let state = serde_json::from_str(&s.to_json()).expect("state serializes to JSON");
                    send(ServerMessage::Ack { of: "snapshot".into(), state: Some(state) });
                }
                Err(e) => send(ServerMessage::error("sim_error", e)),
            },
            ClientMessage::Reset { rope, centerline } => {
                if self.recording.is_some() {
                    send(ServerMessage::error("recording_active", "stop the recording before resetting"));
                    return None;
                }
                match self.reset_to(rope, centerline) {
                    Ok(()) => send(ServerMessage::Ack { of: "reset".into(), state: None }),
                    Err(e) => send(ServerMessage::error("bad_reset", e)),
                }
            }
            ClientMessage::RecordStart { rope_id } => {
                if self.recording.is_some() {
                    send(ServerMessage::error("recording_active", "a recording is already running"));
                } else if rope_id.is_empty() || rope_id.contains(['/', '\\']) || rope_id.starts_with('.') {
                    send(ServerMessage::error("bad_message", format!("rope_id {rope_id:?} is not usable in a file name")));
                } else {
                    return Some(rope_id);
                }
            }
            ClientMessage::RecordStop => match self.recording.take() {
                None => send(ServerMessage::error("not_recording", "no recording is running")),
                Some(rec) => {
                    let frames = rec.frames.len();
                    let rope_id = rec.rope_id.clone();
                    match self.save(rec) {
                        Ok(path) => self.broadcast(&ServerMessage::Recording {
                            active: false,
                            rope_id,
                            frames,
                            path: Some(path.display().to_string()),
                        }),
                        Err(e) => send(ServerMessage::error("io_error", e)),
                    }
                }
            },
        }
        None
    }

    fn reset_to(&mut self, rope: Option<String>, centerline: Option<Vec<[f64; 3]>>) -> Result<(), String> {
        let state = match (rope, centerline) {
            (Some(_), Some(_)) => return Err("give either rope or centerline, not both".into()),
            (Some(name), None) => self.presets.get(&name).ok_or_else(|| format!("unknown rope preset {name:?}"))?,
            (None, Some(rows)) => {
                let pts: Vec<Vec3> = rows.into_iter().map(Vec3::from).collect();
                let pts = resample_polyline(&pts, PARTICLE_COUNT).map_err(|e| e.to_string())?;
                ParticleState::new(pts).map_err(|e| e.to_string())?
            }
            (None, None) => self.rope.clone(),
        };
        let targets = parked();
        self.sim = Self::fresh(&state, &targets, self.sim.material, self.sim.config).map_err(|e| e.to_string())?;
        self.rope = state;
        self.targets = targets;
        Ok(())
    }

    fn tick(&mut self, start: Option<(String, Reply)>) {
        let [l, r] = self.targets.clone();
        if let Err(e) = self.sim.step(&l, &r) {
            self.broadcast(&ServerMessage::error("sim_error", format!("{e}; rope reset")));
            self.recording = None;
            let rope = self.rope.clone();
            let (material, config) = (self.sim.material, self.sim.config);
            match Self::fresh(&rope, &parked(), material, config) {
                Ok(sim) => {
                    self.sim = sim;
                    self.targets = parked();
                }
                Err(e) => self.broadcast(&ServerMessage::error("sim_error", e.to_string())),
            }
        }
        if let Some(rec) = &mut self.recording {
            let t = rec.frames.len() as f64 / SIM_RATE_HZ;
            rec.frames.push(frame(t, &self.targets));
        }
        if let Some((rope_id, reply)) = start {
            self.start_recording(rope_id, &reply);
        }
        self.tick += 1;
        self.broadcast_state();
    }

    /// Restarts the rod from its current canonical shape exactly the way a
    /// headless replay starts from an initial state, so the recording can be
    /// reproduced offline.
    fn start_recording(&mut self, rope_id: String, reply: &Reply) {
        let restarted = canonical(&self.sim)
            .and_then(|init| Self::fresh(&init, &self.targets, self.sim.material, self.sim.config).map(|sim| (init, sim)).map_err(|e| e.to_string()));
        match restarted {
            Ok((init, sim)) => {
                self.sim = sim;
                let frames = vec![frame(0.0, &self.targets)];
                self.broadcast(&ServerMessage::Recording { active: true, rope_id: rope_id.clone(), frames: 1, path: None });
                self.recording = Some(Recording { rope_id, init, frames });
            }
            Err(e) => {
                let _ = reply.send(ServerMessage::error("sim_error", e));
            }
        }
    }

    fn save(&self, rec: Recording) -> Result<PathBuf, String> {
        std::fs::create_dir_all(&self.record_dir).map_err(|e| format!("{}: {e}", self.record_dir.display()))?;
        let stem = (1..)
            .map(|n| format!("{}-{n}", rec.rope_id))
            .find(|s| !self.record_dir.join(format!("{s}.demo.jsonl")).exists())
            .expect("unbounded range");
        let path = self.record_dir.join(format!("{stem}.demo.jsonl"));
        let demo = Demonstration { meta: DemoMeta { rope_id: rec.rope_id, rate_hz: SIM_RATE_HZ }, frames: rec.frames };
        demo.save(&path).map_err(|e| e.to_string())?;
        let sibling = |suffix: &str| -> PathBuf { self.record_dir.join(format!("{stem}.{suffix}.json")) };
        rec.init.save(&sibling("init")).map_err(|e| e.to_string())?;
        canonical(&self.sim)?.save(&sibling("final")).map_err(|e| e.to_string())?;
        Ok(path)
    }

    fn broadcast(&self, msg: &ServerMessage) {
        // no receivers is fine
        let _ = self.states.send(msg.to_text().into());
    }

    fn broadcast_state(&self) {
        let Ok(state) = canonical(&self.sim) else { return };
        let [l, r] = &self.sim.grippers;
        let msg = ServerMessage::State {
            t: self.tick as f64 * self.sim.config.frame_dt,
            particles: state.to_rows(),
            grippers: [GripperView::new(Side::Left, l), GripperView::new(Side::Right, r)],
            crossings: crossings(&state).len(),
        };
        self.broadcast(&msg);
    }
}

fn frame(t: f64, targets: &[GripperState; 2]) -> DemoFrame {
    DemoFrame { t, left: ArmCommand::from_gripper(&targets[0]), right: ArmCommand::from_gripper(&targets[1]) }
}
