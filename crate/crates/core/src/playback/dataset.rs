use super::chunks::{write_chunks, StateActionChunk};
use super::PlaybackError;
use crate::state::FormatError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    pub seed: u64,
    pub held_out_rope: String,
    /// Relative sizes of train and val among the non-held-out demos.
    pub ratio: (usize, usize),
    pub k: usize,
}

impl SplitConfig {
    pub fn new(held_out_rope: impl Into<String>) -> Self {
        Self {
            seed: 0,
            held_out_rope: held_out_rope.into(),
            ratio: (64, 15),
            k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Chunks of one demonstration together with the rope it was recorded on.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoChunks {
    pub demo: String,
    pub rope_id: String,
    pub chunks: Vec<StateActionChunk>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub k: usize,
    pub splits: Splits,
    pub held_out_rope: String,
    /// Demo counts per split.
    pub counts: SplitCounts,
    pub chunk_counts: SplitCounts,
    /// Rope of every demo.
    pub rope_ids: BTreeMap<String, String>,
}

/// `demos` is `(demo id, rope id)`. Test gets every demo on the held-out
/// rope; the rest are sorted by id, shuffled with `seed` and cut so that val
/// holds `round(n · val / (train + val))` of them.
pub fn split_demos(demos: &[(String, String)], config: &SplitConfig) -> Result<Splits, PlaybackError> {
    let ids: BTreeSet<&str> = demos.iter().map(|(d, _)| d.as_str()).collect();
    if ids.len() != demos.len() {
        return Err(PlaybackError::Split("duplicate demo id".into()));
    }
    if !demos.iter().any(|(_, r)| *r == config.held_out_rope) {
        return Err(PlaybackError::Split(format!("held-out rope {:?} not present", config.held_out_rope)));
    }
    let (tr, va) = config.ratio;
    if tr + va == 0 {
        return Err(PlaybackError::Split("train:val ratio is 0:0".into()));
    }
    let mut test: Vec<String> = Vec::new();
    let mut rest: Vec<String> = Vec::new();
    for (d, r) in demos {
        if *r == config.held_out_rope {
            test.push(d.clone());
        } else {
            rest.push(d.clone());
        }
    }
    test.sort();
    rest.sort();
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_val = ((rest.len() * va) as f64 / (tr + va) as f64).round() as usize;
    let val = rest.split_off(rest.len() - n_val);
    let (mut train, mut val) = (rest, val);
    train.sort();
    val.sort();
    Ok(Splits { train, val, test })
}

/// Writes `<split>/<demo>.chunks.jsonl` for every demo and `manifest.json`.
pub fn export_dataset(demos: &[DemoChunks], config: &SplitConfig, out_dir: &Path) -> Result<Manifest, PlaybackError> {
    let pairs: Vec<(String, String)> = demos.iter().map(|d| (d.demo.clone(), d.rope_id.clone())).collect();
    let splits = split_demos(&pairs, config)?;
    let by_id: BTreeMap<&str, &DemoChunks> = demos.iter().map(|d| (d.demo.as_str(), d)).collect();
    let mut chunk_counts = [0usize; 3];
    for (slot, (name, ids)) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)].into_iter().enumerate() {
        let dir = out_dir.join(name);
        std::fs::create_dir_all(&dir).map_err(|e| FormatError::io(&dir, e))?;
        for id in ids {
            let d = by_id[id.as_str()];
            write_chunks(&d.chunks, &dir.join(format!("{id}.chunks.jsonl")))?;
            chunk_counts[slot] += d.chunks.len();
        }
    }
    let manifest = Manifest {
        seed: config.seed,
        k: config.k,
        held_out_rope: config.held_out_rope.clone(),
        counts: SplitCounts {
            train: splits.train.len(),
            val: splits.val.len(),
            test: splits.test.len(),
        },
        chunk_counts: SplitCounts {
            train: chunk_counts[0],
            val: chunk_counts[1],
            test: chunk_counts[2],
        },
        splits,
        rope_ids: pairs.into_iter().collect(),
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("plain data")).map_err(|e| FormatError::io(&path, e))?;
    Ok(manifest)
}

/// Every `*.chunks.jsonl` in `dir`, in file-name order.
pub fn read_split(dir: &Path) -> Result<Vec<StateActionChunk>, PlaybackError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| FormatError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".chunks.jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(super::chunks::read_chunks(&f)?);
    }
    Ok(out)
}
