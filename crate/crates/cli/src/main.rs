mod protocol;
mod serve;

use clap::{Parser, Subcommand, ValueEnum};
use ropetwin::extract::{extract, oracle_cameras, read_scene, render_scene, write_scene, ExtractError, ExtractParams};
use ropetwin::knot::{settled_overhand_state, untangle_demo};
use ropetwin::math::Vec3;
use ropetwin::metrics::{crossings, evaluate_knn, is_untangled, KnnParams, MetricsError};
use ropetwin::par::Execution;
use ropetwin::playback::fixture::{synthetic_demos, write_fixture, FixtureSpec, HELD_OUT_ROPE};
use ropetwin::playback::{
    demo_id, export_dataset, extract_chunks, load_demonstration, read_split, read_trajectory, replay, resample_demo, write_trajectory,
    DemoChunks, PlaybackError, SplitConfig, SIM_RATE_HZ,
};
use ropetwin::sim::{simbench, RodMaterial, SimConfig, SimError};
use ropetwin::state::FormatError;
use ropetwin::ParticleState;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Playback(#[from] PlaybackError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Serve(String),
}

#[derive(Parser)]
#[command(name = "ropetwin", version, about = "Rope digital twin: simulate, extract, label and teleoperate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Knn,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a 100-particle state from a masked multi-view depth scene.
    Extract {
        scene_dir: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Voxel size (m).
        #[arg(long)]
        voxel: Option<f64>,
    },
    /// Replay a demonstration in simulation and write the labeled trajectory.
    Replay {
        demo: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Cut trajectories into state-action chunks and write train/val/test splits.
    Export {
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        k: usize,
        #[arg(long)]
        held_out: String,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        stride: usize,
    },
    /// Score a baseline on a split, printing the final-pose L1 error.
    Eval {
        test_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Baseline::Knn)]
        baseline: Baseline,
        #[arg(long)]
        train: PathBuf,
        #[arg(long, default_value_t = 1)]
        neighbors: usize,
        /// Also write the per-chunk report as JSON.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the crossing count and whether the rope is untangled.
    Knot { state: PathBuf },
    /// Render a state into a synthetic depth scene seen by oracle cameras.
    Render {
        state: PathBuf,
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the websocket teleoperation service.
    Serve {
        #[arg(long, env = "ROPETWIN_PORT", default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Initial rope: `knot` or `straight`.
        #[arg(long, default_value = "knot")]
        rope: String,
        #[arg(long, default_value = "recordings")]
        record_dir: PathBuf,
    },
    /// Time the solver frame by frame on a tightening knot.
    Simbench {
        #[arg(long, default_value_t = 100)]
        particles: usize,
        #[arg(long, default_value_t = 300)]
        frames: usize,
    },
    /// Write a knot state, its untangling demo and the synthetic demo corpus.
    Fixture {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 96)]
        count: usize,
        #[arg(long, default_value_t = 17)]
        held_out: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    points.iter().sum::<Vec3>() / points.len() as f64
}

fn run(command: Command) -> Result<(), CliError> {
    let (material, config) = (RodMaterial::default(), SimConfig::default());
    match command {
        Command::Extract { scene_dir, output, voxel } => {
            let scene = read_scene(&scene_dir)?;
            let mut params = ExtractParams::default();
            if let Some(v) = voxel {
                params.voxel = v;
            }
            let state = extract(&scene, &params)?;
            state.save(&output)?;
            println!("wrote {}", output.display());
        }
        Command::Replay { demo, init, output } => {
            let raw = load_demonstration(&demo)?;
            let demo30 = resample_demo(&raw, SIM_RATE_HZ)?;
            let init = ParticleState::load(&init)?;
            let traj = replay(&demo_id(&demo), &demo30, init.points(), &material, &config)?;
            write_trajectory(&traj, &output)?;
            println!("wrote {} frames to {}", traj.frames.len(), output.display());
        }
        Command::Export { trajectories, k, held_out, output, seed, stride } => {
            let mut per_demo = Vec::with_capacity(trajectories.len());
            for dir in &trajectories {
                let traj = read_trajectory(dir)?;
                let set = extract_chunks(&traj, k, stride.max(1));
                per_demo.push(DemoChunks { demo: traj.demo, rope_id: traj.rope_id, chunks: set.chunks });
            }
            let split = SplitConfig { seed, k, ..SplitConfig::new(held_out) };
            let m = export_dataset(&per_demo, &split, &output)?;
            println!(
                "demos train={} val={} test={} chunks train={} val={} test={}",
                m.counts.train, m.counts.val, m.counts.test, m.chunk_counts.train, m.chunk_counts.val, m.chunk_counts.test
            );
        }
        Command::Eval { test_dir, baseline: Baseline::Knn, train, neighbors, output } => {
            let test = read_split(&test_dir)?;
            let train = read_split(&train)?;
            let params = KnnParams { neighbors, ..Default::default() };
            let report = evaluate_knn(&test, &train, &params, Execution::default())?;
            let a = report.aggregate;
            println!("baseline=knn chunks={} l1_mean={:.6} l1_std={:.6} (x1e-3: {:.1} ± {:.1})", a.count, a.mean, a.std, a.mean * 1e3, a.std * 1e3);
            if let Some(path) = output {
                let text = serde_json::to_string_pretty(&report).expect("plain data serializes");
                std::fs::write(&path, text).map_err(io_err(&path))?;
            }
        }
        Command::Knot { state } => {
            let s = ParticleState::load(&state)?;
            println!("crossings={} untangled={}", crossings(&s).len(), is_untangled(&s));
        }
        Command::Render { state, views, output } => {
            let s = ParticleState::load(&state)?;
            let c = centroid(s.points());
            let cameras = oracle_cameras(views, Vec3::new(c.x, c.y, config.ground_height));
            let scene = render_scene(s.points(), material.radius, &cameras, config.ground_height, Execution::default());
            write_scene(&scene, &output)?;
            println!("wrote {views} views to {}", output.display());
        }
        Command::Serve { port, host, rope, record_dir } => {
            let settings = serve::Settings { host, port, rope, record_dir, material, config };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Serve(e.to_string()))?;
            rt.block_on(serve::run(settings))?;
        }
        Command::Simbench { particles, frames } => {
            let report = simbench(particles, frames, &material, &config)?;
            println!("frame ms max_stretch_residual max_bend_residual contact_pairs active_contacts");
            for f in &report.frames {
                let d = &f.diagnostics;
                println!("{} {:.3} {:.3e} {:.3e} {} {}", d.frame, f.ms, d.max_stretch_residual, d.max_bend_residual, d.contact_pairs, d.active_contacts);
            }
            println!("particles={} frames={} median_ms={:.3}", report.particles, report.frames.len(), report.median_ms());
        }
        Command::Fixture { output, count, held_out } => {
            let knot = settled_overhand_state(0)?;
            std::fs::create_dir_all(&output).map_err(io_err(&output))?;
            knot.save(&output.join("knot.json"))?;
            if let Some(demo) = untangle_demo(&knot, "knot") {
                demo.save(&output.join("untangle.demo.jsonl"))?;
            }
            let spec = FixtureSpec { count, held_out, ..Default::default() };
            let demos = synthetic_demos(&spec, material.radius);
            let paths = write_fixture(&demos, &output.join("demos"))?;
            println!("wrote knot.json, untangle.demo.jsonl and {} demos (held-out rope {HELD_OUT_ROPE})", paths.len());
        }
    }
    Ok(())
}
