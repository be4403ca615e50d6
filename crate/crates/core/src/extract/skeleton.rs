//! Medial-axis skeleton of the top-down rope footprint.
//!
//! The footprint is the alpha shape of the projected cloud. Its boundary
//! samples are re-triangulated; the circumcenters of those triangles are the
//! Voronoi vertices of the boundary, and the ones falling inside the
//! footprint, joined along shared Delaunay edges, approximate the medial
//! axis. The raw graph is then cleaned: close vertices merged, small
//! components and small cycles collapsed, short leaf spurs pruned and pairs of
//! nearby branch points contracted so a crossing becomes one degree-4 node.

use super::{ExtractError, ExtractParams, PointCloud};
use crate::math::Vec2;
use spade::handles::{FixedDirectedEdgeHandle, FixedFaceHandle, InnerTag};
use spade::{DelaunayTriangulation, Point2, PositionInTriangulation, Triangulation};
use std::collections::{BTreeSet, BinaryHeap, HashMap};

/// Undirected skeleton graph in the table plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub vertices: Vec<Vec2>,
    /// `(a, b)` with `a < b`, sorted.
    pub edges: Vec<(usize, usize)>,
}

impl Skeleton {
    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertices.len()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for n in &mut adj {
            n.sort_unstable();
        }
        adj
    }

    pub fn total_length(&self) -> f64 {
        self.edges
            .iter()
            .map(|&(a, b)| (self.vertices[a] - self.vertices[b]).norm())
            .sum()
    }
}

type Dt = DelaunayTriangulation<Point2<f64>>;

/// Ratio of the short-cycle perimeter threshold to the voxel size.
const CYCLE_LEN: f64 = 8.0;
/// Branch points closer than this along the graph (in voxels) are one
/// junction.
const JUNCTION_LEN: f64 = 6.0;

pub fn skeletonize_2d(cloud: &PointCloud, params: &ExtractParams) -> Result<Skeleton, ExtractError> {
    let v = params.voxel;
    let sites = dedupe_xy(cloud, v / 4.0);
    if sites.len() < 4 {
        return Err(ExtractError::Degenerate(format!(
            "{} distinct projected points, need at least 4",
            sites.len()
        )));
    }
    let dt = Dt::bulk_load(sites.iter().map(|p| Point2::new(p.x, p.y)).collect())
        .map_err(|e| ExtractError::Degenerate(format!("triangulation failed: {e:?}")))?;

    let alpha2 = (params.alpha * v).powi(2);
    let mut in_shape = vec![false; dt.all_faces().len()];
    for f in dt.inner_faces() {
        in_shape[f.fix().index()] = f.circumcircle().1 <= alpha2;
    }

    let mut boundary = BTreeSet::new();
    for e in dt.undirected_edges() {
        let d = e.as_directed();
        let left = face_in(&in_shape, d.face().fix().index(), d.face().is_outer());
        let right = face_in(&in_shape, d.rev().face().fix().index(), d.rev().face().is_outer());
        if left != right {
            for vh in e.vertices() {
                boundary.insert(vh.fix().index());
            }
        }
    }
    if boundary.len() < 3 {
        return Err(ExtractError::Degenerate("footprint has no boundary".into()));
    }

    let bpts: Vec<Point2<f64>> = boundary.iter().map(|&i| dt.vertex(fixed_vertex(i)).position()).collect();
    let bdt = Dt::bulk_load(bpts).map_err(|e| ExtractError::Degenerate(format!("triangulation failed: {e:?}")))?;

    let inside = |p: Point2<f64>| footprint_contains(&dt, &in_shape, p);
    let mut node_of = HashMap::new();
    let mut g = Graph::default();
    for f in bdt.inner_faces() {
        let c = f.circumcenter();
        if c.x.is_finite() && c.y.is_finite() && inside(c) {
            node_of.insert(f.fix().index(), g.add(Vec2::new(c.x, c.y)));
        }
    }
    for e in bdt.undirected_edges() {
        let d = e.as_directed();
        let (fa, fb) = (d.face(), d.rev().face());
        if fa.is_outer() || fb.is_outer() {
            continue;
        }
        if let (Some(&a), Some(&b)) = (node_of.get(&fa.fix().index()), node_of.get(&fb.fix().index())) {
            let m = (g.pos[a] + g.pos[b]) / 2.0;
            if a != b && inside(Point2::new(m.x, m.y)) {
                g.link(a, b);
            }
        }
    }

    g.merge_close(v / 2.0);
    g.keep_largest_component();
    for _ in 0..64 {
        let mut changed = g.collapse_short_cycle(CYCLE_LEN * v);
        changed |= g.prune_leaf(params.prune_len * v);
        changed |= g.contract_junction(JUNCTION_LEN * v);
        if !changed {
            break;
        }
    }
    Ok(g.into_skeleton())
}

fn face_in(in_shape: &[bool], index: usize, outer: bool) -> bool {
    !outer && in_shape[index]
}

fn fixed_vertex(i: usize) -> spade::handles::FixedVertexHandle {
    spade::handles::FixedVertexHandle::from_index(i)
}

fn footprint_contains(dt: &Dt, in_shape: &[bool], p: Point2<f64>) -> bool {
    let edge_touches = |e: FixedDirectedEdgeHandle| {
        let d = dt.directed_edge(e);
        [d.face(), d.rev().face()]
            .iter()
            .any(|f| face_in(in_shape, f.fix().index(), f.is_outer()))
    };
    match dt.locate(p) {
        PositionInTriangulation::OnFace(f) => {
            let f: FixedFaceHandle<InnerTag> = f;
            in_shape[f.index()]
        }
        PositionInTriangulation::OnEdge(e) => edge_touches(e),
        PositionInTriangulation::OnVertex(vh) => dt
            .vertex(vh)
            .out_edges()
            .any(|e| face_in(in_shape, e.face().fix().index(), e.face().is_outer())),
        _ => false,
    }
}

fn dedupe_xy(cloud: &PointCloud, cell: f64) -> Vec<Vec2> {
    let mut acc: HashMap<(i64, i64), (Vec2, usize)> = HashMap::new();
    for p in &cloud.points {
        let k = ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64);
        let e = acc.entry(k).or_insert((Vec2::zeros(), 0));
        e.0 += Vec2::new(p.x, p.y);
        e.1 += 1;
    }
    let mut cells: Vec<_> = acc.into_iter().collect();
    cells.sort_unstable_by_key(|(k, _)| *k);
    cells.into_iter().map(|(_, (s, n))| s / n as f64).collect()
}

/// Mutable graph with tombstoned vertices; indices stay stable so every
/// cleanup step is deterministic.
#[derive(Default)]
struct Graph {
    pos: Vec<Vec2>,
    adj: Vec<BTreeSet<usize>>,
    alive: Vec<bool>,
}

impl Graph {
    fn add(&mut self, p: Vec2) -> usize {
        self.pos.push(p);
        self.adj.push(BTreeSet::new());
        self.alive.push(true);
        self.pos.len() - 1
    }

    fn link(&mut self, a: usize, b: usize) {
        if a != b {
            self.adj[a].insert(b);
            self.adj[b].insert(a);
        }
    }

    fn remove(&mut self, v: usize) {
        let ns: Vec<usize> = self.adj[v].iter().copied().collect();
        for n in ns {
            self.adj[n].remove(&v);
        }
        self.adj[v].clear();
        self.alive[v] = false;
    }

    fn deg(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    fn live(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pos.len()).filter(|&v| self.alive[v])
    }

    /// Replaces `group` by its lowest-index member placed at `at`.
    fn contract(&mut self, group: &[usize], at: Vec2) {
        let keep = *group.iter().min().expect("non-empty group");
        let set: BTreeSet<usize> = group.iter().copied().collect();
        let mut outside = BTreeSet::new();
        for &g in group {
            outside.extend(self.adj[g].iter().filter(|n| !set.contains(n)));
        }
        for &g in group {
            self.remove(g);
        }
        self.alive[keep] = true;
        self.pos[keep] = at;
        for n in outside {
            self.link(keep, n);
        }
    }

    fn merge_close(&mut self, dist: f64) {
        let ids: Vec<usize> = self.live().collect();
        let mut parent: Vec<usize> = (0..self.pos.len()).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let key = |p: &Vec2| ((p.x / dist).floor() as i64, (p.y / dist).floor() as i64);
        for &i in &ids {
            cells.entry(key(&self.pos[i])).or_default().push(i);
        }
        for &i in &ids {
            let (cx, cy) = key(&self.pos[i]);
            for gx in cx - 1..=cx + 1 {
                for gy in cy - 1..=cy + 1 {
                    if let Some(js) = cells.get(&(gx, gy)) {
                        for &j in js {
                            if j > i && (self.pos[i] - self.pos[j]).norm() < dist {
                                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                                if a != b {
                                    parent[a.max(b)] = a.min(b);
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &i in &ids {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        for (_, g) in groups {
            if g.len() > 1 {
                let c = g.iter().map(|&i| self.pos[i]).sum::<Vec2>() / g.len() as f64;
                self.contract(&g, c);
            }
        }
    }

    fn keep_largest_component(&mut self) {
        let mut seen = vec![false; self.pos.len()];
        let mut best: (f64, Vec<usize>) = (-1.0, Vec::new());
        for s in self.live().collect::<Vec<_>>() {
            if seen[s] {
                continue;
            }
            let mut comp = vec![s];
            seen[s] = true;
            let mut k = 0;
            let mut len = 0.0;
            while k < comp.len() {
                let v = comp[k];
                k += 1;
                for &n in &self.adj[v] {
                    if n > v {
                        len += (self.pos[n] - self.pos[v]).norm();
                    }
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
            }
            if len > best.0 {
                best = (len, comp);
            }
        }
        let keep: BTreeSet<usize> = best.1.into_iter().collect();
        for v in self.live().collect::<Vec<_>>() {
            if !keep.contains(&v) {
                self.remove(v);
            }
        }
    }

    /// Shortest path from `s` to `t` avoiding the direct edge, if shorter
    /// than `limit`.
    fn detour(&self, s: usize, t: usize, limit: f64) -> Option<Vec<usize>> {
        #[derive(PartialEq)]
        struct Item(f64, usize);
        impl Eq for Item {}
        impl PartialOrd for Item {
            fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(o))
            }
        }
        impl Ord for Item {
            fn cmp(&self, o: &Self) -> std::cmp::Ordering {
                o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
            }
        }
        let mut dist: HashMap<usize, f64> = HashMap::new();
        let mut prev: HashMap<usize, usize> = HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(s, 0.0);
        heap.push(Item(0.0, s));
        while let Some(Item(d, v)) = heap.pop() {
            if v == t {
                let mut path = vec![t];
                let mut c = t;
                while let Some(&p) = prev.get(&c) {
                    path.push(p);
                    c = p;
                }
                return Some(path);
            }
            if d > dist[&v] {
                continue;
            }
            for &n in &self.adj[v] {
                if v == s && n == t {
                    continue;
                }
                let nd = d + (self.pos[n] - self.pos[v]).norm();
                if nd < limit && dist.get(&n).is_none_or(|&x| nd < x) {
                    dist.insert(n, nd);
                    prev.insert(n, v);
                    heap.push(Item(nd, n));
                }
            }
        }
        None
    }

    fn collapse_short_cycle(&mut self, limit: f64) -> bool {
        for a in self.live().collect::<Vec<_>>() {
            let ns: Vec<usize> = self.adj[a].iter().copied().filter(|&b| b > a).collect();
            for b in ns {
                let direct = (self.pos[a] - self.pos[b]).norm();
                if let Some(path) = self.detour(a, b, limit - direct) {
                    let c = path.iter().map(|&i| self.pos[i]).sum::<Vec2>() / path.len() as f64;
                    self.contract(&path, c);
                    return true;
                }
            }
        }
        false
    }

    /// Follows degree-2 vertices from `from` through `first` until a vertex
    /// of other degree. Returns the visited chain (excluding `from`) and its
    /// length.
    fn chain(&self, from: usize, first: usize) -> (Vec<usize>, f64) {
        let mut chain = vec![first];
        let mut len = (self.pos[first] - self.pos[from]).norm();
        let (mut prev, mut cur) = (from, first);
        while self.deg(cur) == 2 {
            let next = *self.adj[cur].iter().find(|&&n| n != prev).expect("degree 2");
            if next == from {
                break;
            }
            len += (self.pos[next] - self.pos[cur]).norm();
            chain.push(next);
            prev = cur;
            cur = next;
        }
        (chain, len)
    }

    /// Removes the shortest leaf branch below `limit` that hangs off a branch
    /// point.
    fn prune_leaf(&mut self, limit: f64) -> bool {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for leaf in self.live().filter(|&v| self.deg(v) == 1).collect::<Vec<_>>() {
            let first = *self.adj[leaf].iter().next().expect("degree 1");
            let (chain, len) = self.chain(leaf, first);
            let end = *chain.last().expect("non-empty");
            if self.deg(end) >= 3 && len < limit && best.as_ref().is_none_or(|b| len < b.0) {
                let mut branch = vec![leaf];
                branch.extend(&chain[..chain.len() - 1]);
                best = Some((len, branch));
            }
        }
        match best {
            Some((_, branch)) => {
                for v in branch {
                    self.remove(v);
                }
                true
            }
            None => false,
        }
    }

    fn contract_junction(&mut self, limit: f64) -> bool {
        let mut best: Option<(f64, Vec<usize>, Vec2)> = None;
        for j in self.live().filter(|&v| self.deg(v) >= 3).collect::<Vec<_>>() {
            for &n in &self.adj[j] {
                let (chain, len) = self.chain(j, n);
                let end = *chain.last().expect("non-empty");
                if end != j && end > j && self.deg(end) >= 3 && len < limit && best.as_ref().is_none_or(|b| len < b.0) {
                    let mut group = vec![j];
                    group.extend(&chain);
                    best = Some((len, group, (self.pos[j] + self.pos[end]) / 2.0));
                }
            }
        }
        match best {
            Some((_, group, at)) => {
                self.contract(&group, at);
                true
            }
            None => false,
        }
    }

    fn into_skeleton(self) -> Skeleton {
        let ids: Vec<usize> = self.live().collect();
        let mut index = HashMap::new();
        for (k, &i) in ids.iter().enumerate() {
            index.insert(i, k);
        }
        let mut edges = Vec::new();
        for &a in &ids {
            for &b in &self.adj[a] {
                if b > a {
                    edges.push((index[&a], index[&b]));
                }
            }
        }
        edges.sort_unstable();
        Skeleton {
            vertices: ids.iter().map(|&i| self.pos[i]).collect(),
            edges,
        }
    }
}
