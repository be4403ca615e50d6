use super::grid::Grid2;
use super::{ExtractError, ExtractParams, PointCloud, Skeleton};
use crate::math::Vec2;
use std::collections::HashSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Surface,
    Over,
    Under,
}

/// One traversal of a crossing node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Passage {
    /// Index into `CenterlinePath::vertices`.
    pub index: usize,
    pub over: bool,
    /// Mean observed strand height near the node (m).
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub node: Vec2,
    pub passages: [Passage; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterlinePath {
    pub vertices: Vec<Vec2>,
    pub crossings: Vec<Crossing>,
    pub layers: Vec<Layer>,
}

impl CenterlinePath {
    /// Cumulative planar arc length at each vertex.
    pub fn arc_positions(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.vertices.len()];
        for i in 1..s.len() {
            s[i] = s[i - 1] + (self.vertices[i] - self.vertices[i - 1]).norm();
        }
        s
    }

    /// Height separating the two strands at crossing `c`.
    pub fn split_height(&self, c: usize) -> f64 {
        let [a, b] = self.crossings[c].passages;
        0.5 * (a.height + b.height)
    }
}

/// Directions at a junction are measured over this much path, in voxels.
const DIRECTION_LEN: f64 = 3.0;

/// Walks the skeleton from the endpoint with the smaller `(x, y)`, going
/// straight through every degree-4 node, and labels each passage over or
/// under by comparing mean strand heights around the node.
pub fn order_and_resolve(skeleton: &Skeleton, cloud: &PointCloud, params: &ExtractParams) -> Result<CenterlinePath, ExtractError> {
    let deg = skeleton.degrees();
    if let Some(&d) = deg.iter().filter(|&&d| d >= 5 || d == 3).max() {
        return Err(ExtractError::UnresolvableJunction { degree: d });
    }
    let leaves: Vec<usize> = (0..deg.len()).filter(|&v| deg[v] == 1).collect();
    if leaves.len() != 2 {
        return Err(ExtractError::Topology { endpoints: leaves.len() });
    }
    let pos = &skeleton.vertices;
    let adj = skeleton.neighbors();
    let start = *leaves
        .iter()
        .min_by(|&&a, &&b| pos[a].x.total_cmp(&pos[b].x).then(pos[a].y.total_cmp(&pos[b].y)))
        .expect("two leaves");

    let dir_len = DIRECTION_LEN * params.voxel;
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut used: HashSet<(usize, usize)> = HashSet::new();
    let mut walk = vec![start];
    let mut cur = start;
    loop {
        let open: Vec<usize> = adj[cur].iter().copied().filter(|&n| !used.contains(&key(cur, n))).collect();
        if open.is_empty() {
            break;
        }
        let next = if open.len() == 1 {
            open[0]
        } else {
            let back = point_back(&walk, pos, dir_len);
            let d_in = (pos[cur] - pos[back]).normalize();
            let mut best = (f64::NEG_INFINITY, open[0]);
            for &n in &open {
                let ahead = point_ahead(cur, n, &adj, &deg, pos, dir_len);
                let d_out = (pos[ahead] - pos[cur]).normalize();
                let score = d_in.dot(&d_out);
                if score > best.0 {
                    best = (score, n);
                }
            }
            best.1
        };
        used.insert(key(cur, next));
        walk.push(next);
        cur = next;
    }
    if used.len() != skeleton.edges.len() {
        return Err(ExtractError::IncompletePath {
            unvisited: skeleton.edges.len() - used.len(),
        });
    }

    let vertices: Vec<Vec2> = walk.iter().map(|&v| pos[v]).collect();
    let mut path = CenterlinePath {
        layers: vec![Layer::Surface; vertices.len()],
        vertices,
        crossings: Vec::new(),
    };
    let s = path.arc_positions();
    let grid = Grid2::new(&cloud.points, params.voxel);
    let window = params.window * params.voxel;

    let mut nodes: Vec<usize> = (0..deg.len()).filter(|&v| deg[v] == 4).collect();
    nodes.sort_by_key(|&v| walk.iter().position(|&w| w == v));
    for node in nodes {
        let idx: Vec<usize> = (0..walk.len()).filter(|&k| walk[k] == node).collect();
        if idx.len() != 2 {
            return Err(ExtractError::UnresolvableJunction { degree: 4 });
        }
        let h: Vec<f64> = idx
            .iter()
            .map(|&k| strand_height(&path, &s, k, cloud, &grid, params.voxel, window))
            .collect();
        let first_over = h[0] >= h[1];
        path.crossings.push(Crossing {
            node: pos[node],
            passages: [
                Passage { index: idx[0], over: first_over, height: h[0] },
                Passage { index: idx[1], over: !first_over, height: h[1] },
            ],
        });
        for (j, &k) in idx.iter().enumerate() {
            let layer = if (j == 0) == first_over { Layer::Over } else { Layer::Under };
            for (i, si) in s.iter().enumerate() {
                if (si - s[k]).abs() <= window {
                    path.layers[i] = layer;
                }
            }
        }
    }
    Ok(path)
}

fn point_back(walk: &[usize], pos: &[Vec2], len: f64) -> usize {
    let cur = *walk.last().expect("non-empty");
    let mut acc = 0.0;
    for w in walk.windows(2).rev() {
        acc += (pos[w[1]] - pos[w[0]]).norm();
        if acc >= len {
            return w[0];
        }
    }
    if walk.len() > 1 {
        walk[0]
    } else {
        cur
    }
}

fn point_ahead(from: usize, first: usize, adj: &[Vec<usize>], deg: &[usize], pos: &[Vec2], len: f64) -> usize {
    let (mut prev, mut cur) = (from, first);
    let mut acc = (pos[cur] - pos[prev]).norm();
    while acc < len && deg[cur] == 2 {
        let next = if adj[cur][0] == prev { adj[cur][1] } else { adj[cur][0] };
        acc += (pos[next] - pos[cur]).norm();
        prev = cur;
        cur = next;
    }
    cur
}

/// Mean over path samples between 2 voxels and `window` of arc distance from
/// vertex `k` of the median cloud height near each sample. Samples right at
/// the node are skipped because both strands overlap there.
fn strand_height(path: &CenterlinePath, s: &[f64], k: usize, cloud: &PointCloud, grid: &Grid2, voxel: f64, window: f64) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, p) in path.vertices.iter().enumerate() {
        let d = (s[i] - s[k]).abs();
        if d < 2.0 * voxel || d > window {
            continue;
        }
        let ids = grid.within(&cloud.points, p.x, p.y, 0.75 * voxel);
        if ids.is_empty() {
            continue;
        }
        let mut z: Vec<f64> = ids.iter().map(|&j| cloud.points[j].z).collect();
        z.sort_by(f64::total_cmp);
        sum += z[z.len() / 2];
        n += 1;
    }
    if n == 0 {
        f64::NEG_INFINITY
    } else {
        sum / n as f64
    }
}
