use crate::math::Vec3;
use std::collections::HashMap;

/// Uniform hash grid over the xy projection of a point set.
pub(crate) struct Grid2 {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid2 {
    pub fn new(points: &[Vec3], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p.x, p.y, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    /// Indices of points within `radius` of (x, y) in the plane, ascending.
    pub fn within(&self, points: &[Vec3], x: f64, y: f64, radius: f64) -> Vec<usize> {
        let r = (radius / self.cell).ceil() as i64;
        let (cx, cy) = key(x, y, self.cell);
        let mut out = Vec::new();
        for gx in cx - r..=cx + r {
            for gy in cy - r..=cy + r {
                if let Some(ids) = self.cells.get(&(gx, gy)) {
                    for &i in ids {
                        let p = &points[i];
                        if (p.x - x).powi(2) + (p.y - y).powi(2) <= radius * radius {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn key(x: f64, y: f64, cell: f64) -> (i64, i64) {
    ((x / cell).floor() as i64, (y / cell).floor() as i64)
}
