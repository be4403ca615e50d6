use super::grid::Grid2;
use super::{CenterlinePath, ExtractError, ExtractParams, Layer, PointCloud};
use crate::math::Vec3;

/// Assigns each path vertex a height from cloud points within two voxels.
///
/// Near a crossing the neighborhood holds both strands; the split height
/// between the two observed strand heights separates them, over vertices use
/// the points above it and under vertices the points below. An under vertex
/// with nothing below the split is hidden and, like any vertex without
/// nearby points, is interpolated along the path from resolved neighbors.
/// Heights are the mean observed surface minus `surface_offset`.
pub fn lift_to_3d(path: &CenterlinePath, cloud: &PointCloud, params: &ExtractParams) -> Result<Vec<Vec3>, ExtractError> {
    let n = path.vertices.len();
    let grid = Grid2::new(&cloud.points, params.voxel);
    let s = path.arc_positions();
    let window = params.window * params.voxel;

    // split height of the nearest crossing passage, per vertex
    let mut split = vec![None; n];
    for (c, crossing) in path.crossings.iter().enumerate() {
        for p in &crossing.passages {
            for i in 0..n {
                if (s[i] - s[p.index]).abs() <= window {
                    split[i] = Some(path.split_height(c));
                }
            }
        }
    }

    let mut z: Vec<Option<f64>> = Vec::with_capacity(n);
    for (i, v) in path.vertices.iter().enumerate() {
        let heights: Vec<f64> = grid
            .within(&cloud.points, v.x, v.y, 2.0 * params.voxel)
            .into_iter()
            .map(|j| cloud.points[j].z)
            .collect();
        let chosen: Vec<f64> = match (path.layers[i], split[i]) {
            (Layer::Over, Some(h)) => {
                let above: Vec<f64> = heights.iter().copied().filter(|&z| z >= h).collect();
                if above.is_empty() {
                    heights
                } else {
                    above
                }
            }
            (Layer::Under, Some(h)) => heights.into_iter().filter(|&z| z < h).collect(),
            _ => heights,
        };
        z.push(if chosen.is_empty() {
            None
        } else {
            Some(chosen.iter().sum::<f64>() / chosen.len() as f64 - params.surface_offset)
        });
    }

    let filled = interpolate_gaps(&z, &s).ok_or(ExtractError::Lifting)?;
    Ok(path
        .vertices
        .iter()
        .zip(filled)
        .map(|(v, z)| Vec3::new(v.x, v.y, z))
        .collect())
}

/// Linear interpolation in arc length between resolved values; constant
/// extension past the first and last resolved vertex.
fn interpolate_gaps(z: &[Option<f64>], s: &[f64]) -> Option<Vec<f64>> {
    let known: Vec<usize> = (0..z.len()).filter(|&i| z[i].is_some()).collect();
    let (&first, &last) = (known.first()?, known.last()?);
    let mut out = vec![0.0; z.len()];
    for i in 0..z.len() {
        out[i] = match z[i] {
            Some(v) => v,
            None if i < first => z[first].expect("known"),
            None if i > last => z[last].expect("known"),
            None => {
                let k = known.partition_point(|&j| j < i);
                let (a, b) = (known[k - 1], known[k]);
                let t = (s[i] - s[a]) / (s[b] - s[a]);
                z[a].expect("known") * (1.0 - t) + z[b].expect("known") * t
            }
        };
    }
    Some(out)
}
