//! Topological and action-space evaluation: top-down crossings, the final
//! row L1 chunk error and a nearest-neighbour retrieval baseline.

use crate::math::{Vec2, Vec3};
use crate::par::{self, Execution};
use crate::playback::StateActionChunk;
use crate::state::{ActionRow, ParticleState, ACTION_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Dimension(String),
    #[error("no training chunks")]
    NoData,
}

/// A transversal self-intersection of the top-down projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingRecord {
    pub seg_a: usize,
    pub seg_b: usize,
    pub point: Vec2,
    /// Sign of the 2D cross product of the over strand's direction with the
    /// under strand's (the usual knot-diagram crossing sign).
    pub sign: i8,
    /// Segment `seg_a` passes above `seg_b`.
    pub a_over: bool,
    /// Parameters along each segment.
    pub s: f64,
    pub t: f64,
}

const MERGE_EPS: f64 = 1e-9;

pub fn crossings(state: &ParticleState) -> Vec<CrossingRecord> {
    polyline_crossings(state.points())
}

/// Crossings of any open polyline; `seg_a < seg_b` and `seg_b - seg_a >= 2`.
/// A hit through a shared vertex is reported once, on the lower segment pair.
pub fn polyline_crossings(points: &[Vec3]) -> Vec<CrossingRecord> {
    let n = points.len();
    let mut out: Vec<CrossingRecord> = Vec::new();
    if n < 4 {
        return out;
    }
    let (lo, hi): (Vec<Vec2>, Vec<Vec2>) = points
        .windows(2)
        .map(|w| (Vec2::new(w[0].x.min(w[1].x), w[0].y.min(w[1].y)), Vec2::new(w[0].x.max(w[1].x), w[0].y.max(w[1].y))))
        .unzip();
    for i in 0..n - 1 {
        for j in i + 2..n - 1 {
            if lo[i].x > hi[j].x + MERGE_EPS || lo[j].x > hi[i].x + MERGE_EPS || lo[i].y > hi[j].y + MERGE_EPS || lo[j].y > hi[i].y + MERGE_EPS {
                continue;
            }
            if let Some(rec) = intersect(points, i, j) {
                let dup = out.iter().any(|r| {
                    (r.point - rec.point).norm() <= MERGE_EPS && rec.seg_a.abs_diff(r.seg_a) <= 1 && rec.seg_b.abs_diff(r.seg_b) <= 1
                });
                if !dup {
                    out.push(rec);
                }
            }
        }
    }
    out
}

fn intersect(p: &[Vec3], i: usize, j: usize) -> Option<CrossingRecord> {
    let a0 = p[i].xy();
    let da = p[i + 1].xy() - a0;
    let b0 = p[j].xy();
    let db = p[j + 1].xy() - b0;
    let denom = da.perp(&db);
    if denom.abs() < 1e-18 {
        return None;
    }
    let w = b0 - a0;
    let s = w.perp(&db) / denom;
    let t = w.perp(&da) / denom;
    let tol_a = MERGE_EPS / da.norm().max(1e-300);
    let tol_b = MERGE_EPS / db.norm().max(1e-300);
    if s < -tol_a || s > 1.0 + tol_a || t < -tol_b || t > 1.0 + tol_b {
        return None;
    }
    let (s, t) = (s.clamp(0.0, 1.0), t.clamp(0.0, 1.0));
    let za = p[i].z + (p[i + 1].z - p[i].z) * s;
    let zb = p[j].z + (p[j + 1].z - p[j].z) * t;
    Some(CrossingRecord {
        seg_a: i,
        seg_b: j,
        point: a0 + da * s,
        sign: if (denom > 0.0) == (za > zb) { 1 } else { -1 },
        a_over: za > zb,
        s,
        t,
    })
}

/// No crossings in the top-down projection. Conservative: an incidental
/// overlap that is not a knot still counts as tangled.
pub fn is_untangled(state: &ParticleState) -> bool {
    crossings(state).is_empty()
}

/// How well the crossings of `estimate` reproduce those of `truth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CrossingAgreement {
    pub truth: usize,
    pub estimate: usize,
    /// Truth crossings with an estimated crossing within the match radius.
    pub matched: usize,
    /// Matched crossings whose over strand is the same strand in both.
    pub layer_correct: usize,
}

impl CrossingAgreement {
    pub fn exact(&self) -> bool {
        self.truth == self.estimate && self.matched == self.truth && self.layer_correct == self.truth
    }
}

fn segment_dir(p: &[Vec3], i: usize) -> Vec2 {
    (p[i + 1].xy() - p[i].xy()).normalize()
}

/// Pairs each true crossing with the nearest estimated one (2D, within
/// `radius`) and checks the over strand. Strands are told apart by their
/// direction at the crossing, so the two polylines need not share an
/// orientation or a parameterization.
pub fn crossing_agreement(estimate: &[Vec3], truth: &[Vec3], radius: f64) -> CrossingAgreement {
    let ct = polyline_crossings(truth);
    let ce = polyline_crossings(estimate);
    let mut used = vec![false; ce.len()];
    let (mut matched, mut layer_correct) = (0, 0);
    for t in &ct {
        let best = ce
            .iter()
            .enumerate()
            .filter(|(k, e)| !used[*k] && (e.point - t.point).norm() <= radius)
            .min_by(|a, b| (a.1.point - t.point).norm().total_cmp(&(b.1.point - t.point).norm()));
        let Some((k, e)) = best else { continue };
        used[k] = true;
        matched += 1;
        let over_t = segment_dir(truth, if t.a_over { t.seg_a } else { t.seg_b });
        let under_t = segment_dir(truth, if t.a_over { t.seg_b } else { t.seg_a });
        let over_e = segment_dir(estimate, if e.a_over { e.seg_a } else { e.seg_b });
        if over_e.dot(&over_t).abs() > over_e.dot(&under_t).abs() {
            layer_correct += 1;
        }
    }
    CrossingAgreement {
        truth: ct.len(),
        estimate: ce.len(),
        matched,
        layer_correct,
    }
}

fn check_shapes(predicted: &[ActionRow], truth: &[ActionRow]) -> Result<(), MetricsError> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(MetricsError::Dimension(format!(
            "predicted has {} rows, ground truth {}",
            predicted.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Mean absolute difference over the 16 dimensions of the final row.
pub fn l1_error(predicted: &[ActionRow], truth: &[ActionRow]) -> Result<f64, MetricsError> {
    check_shapes(predicted, truth)?;
    let (p, t) = (predicted.last().expect("non-empty"), truth.last().expect("non-empty"));
    Ok(p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / ACTION_DIM as f64)
}

/// Mean absolute difference over every row and dimension.
pub fn l1_per_step(predicted: &[ActionRow], truth: &[ActionRow]) -> Result<f64, MetricsError> {
    check_shapes(predicted, truth)?;
    let total: f64 = predicted
        .iter()
        .zip(truth)
        .flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()))
        .sum();
    Ok(total / (predicted.len() * ACTION_DIM) as f64)
}

/// Mean distance between corresponding particles.
pub fn mean_particle_distance(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len(), "particle counts differ");
    a.iter().zip(b).map(|(p, q)| (p - q).norm()).sum::<f64>() / a.len() as f64
}

/// Mean over `points` of the distance to the nearest point of `polyline`.
pub fn mean_nearest_distance(points: &[Vec3], polyline: &[Vec3]) -> f64 {
    let nearest = |p: &Vec3| {
        polyline
            .windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let len2 = d.norm_squared();
                let t = if len2 > 0.0 { ((p - w[0]).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
                (w[0] + d * t - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    };
    points.iter().map(nearest).sum::<f64>() / points.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnnParams {
    pub neighbors: usize,
    /// Weight of the proprioception distance; 0 ignores it.
    pub q_weight: f64,
}

impl Default for KnnParams {
    fn default() -> Self {
        Self { neighbors: 1, q_weight: 0.0 }
    }
}

const POSITION_DIMS: [usize; 8] = [0, 1, 2, 7, 8, 9, 10, 15];

/// Retrieval baseline: actions of the training chunk whose state is closest
/// (mean per-particle distance, plus `q_weight` times the proprioception
/// distance). Ties go to the lowest `(demo, frame)`. With several neighbours
/// positions and openness are averaged and quaternions come from the nearest.
pub fn knn_predict(state: &ParticleState, q: &ActionRow, train: &[StateActionChunk], params: &KnnParams) -> Result<Vec<ActionRow>, MetricsError> {
    if train.is_empty() || params.neighbors == 0 {
        return Err(MetricsError::NoData);
    }
    let mut scored: Vec<(f64, &StateActionChunk)> = train
        .iter()
        .map(|c| {
            let mut d = mean_particle_distance(state.points(), c.state.points());
            if params.q_weight != 0.0 {
                let dq: f64 = q.iter().zip(&c.q).map(|(a, b)| (a - b) * (a - b)).sum();
                d += params.q_weight * dq.sqrt();
            }
            (d, c)
        })
        .collect();
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then_with(|| a.1.demo.cmp(&b.1.demo))
            .then_with(|| a.1.frame.cmp(&b.1.frame))
    });
    let k = params.neighbors.min(scored.len());
    let nearest = scored[0].1;
    if k == 1 {
        return Ok(nearest.actions.clone());
    }
    let rows = nearest.actions.len();
    if scored[..k].iter().any(|(_, c)| c.actions.len() != rows) {
        return Err(MetricsError::Dimension("neighbours have different chunk lengths".into()));
    }
    let mut out = nearest.actions.clone();
    for (r, row) in out.iter_mut().enumerate() {
        for &d in &POSITION_DIMS {
            row[d] = scored[..k].iter().map(|(_, c)| c.actions[r][d]).sum::<f64>() / k as f64;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub demo: String,
    pub frame: usize,
    pub l1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_chunk: Vec<EvalEntry>,
    pub aggregate: Aggregate,
}

pub fn aggregate(values: &[f64]) -> Aggregate {
    let n = values.len();
    if n == 0 {
        return Aggregate { mean: 0.0, std: 0.0, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Aggregate { mean, std: var.sqrt(), count: n }
}

/// Runs the retrieval baseline on every test chunk against `train`.
pub fn evaluate_knn(test: &[StateActionChunk], train: &[StateActionChunk], params: &KnnParams, exec: Execution) -> Result<EvalReport, MetricsError> {
    let results = par::map(exec, test, |c| {
        let pred = knn_predict(&c.state, &c.q, train, params)?;
        Ok(EvalEntry {
            demo: c.demo.clone(),
            frame: c.frame,
            l1: l1_error(&pred, &c.actions)?,
        })
    });
    let per_chunk = results.into_iter().collect::<Result<Vec<_>, MetricsError>>()?;
    let l1: Vec<f64> = per_chunk.iter().map(|e| e.l1).collect();
    Ok(EvalReport {
        aggregate: aggregate(&l1),
        per_chunk,
    })
}
