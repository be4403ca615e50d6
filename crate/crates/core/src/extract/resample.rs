use super::ExtractError;
use crate::math::Vec3;
use crate::state::{ParticleState, PARTICLE_COUNT};

/// `n` points at equal arc-length spacing along `polyline`, endpoints
/// preserved exactly. Points in the first half are located by walking from
/// the start and the rest by walking from the end, with the total length
/// summed in an order-independent way, so reversing the input reverses the
/// output bit for bit when `n` is even.
pub fn resample_polyline(polyline: &[Vec3], n: usize) -> Result<Vec<Vec3>, ExtractError> {
    if n < 2 {
        return Err(ExtractError::Degenerate("need at least 2 output points".into()));
    }
    let mut pts: Vec<Vec3> = Vec::with_capacity(polyline.len());
    for p in polyline {
        if !crate::math::all_finite(p) {
            return Err(ExtractError::Degenerate("non-finite polyline vertex".into()));
        }
        if pts.last() != Some(p) {
            pts.push(*p);
        }
    }
    if pts.len() < 2 {
        return Err(ExtractError::Degenerate("polyline has zero length".into()));
    }
    let lens: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let mut sorted = lens.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    if total <= 0.0 {
        return Err(ExtractError::Degenerate("polyline has zero length".into()));
    }

    let step = total / (n - 1) as f64;
    let mut out = vec![Vec3::zeros(); n];
    let half = n / 2;
    walk(&pts, &lens, step, half, |i, p| out[i] = p);
    let rev: Vec<Vec3> = pts.iter().rev().copied().collect();
    let rev_lens: Vec<f64> = lens.iter().rev().copied().collect();
    walk(&rev, &rev_lens, step, n - half, |i, p| out[n - 1 - i] = p);
    Ok(out)
}

/// Emits the first `count` samples at arc positions `i * step` from the
/// start of `pts`.
fn walk(pts: &[Vec3], lens: &[f64], step: f64, count: usize, mut emit: impl FnMut(usize, Vec3)) {
    let mut seg = 0;
    let mut start = 0.0;
    for i in 0..count {
        if i == 0 {
            emit(0, pts[0]);
            continue;
        }
        let s = i as f64 * step;
        while seg + 1 < lens.len() && start + lens[seg] < s {
            start += lens[seg];
            seg += 1;
        }
        let t = ((s - start) / lens[seg]).clamp(0.0, 1.0);
        emit(i, pts[seg] + (pts[seg + 1] - pts[seg]) * t);
    }
}

pub fn resample_arclength(polyline: &[Vec3]) -> Result<ParticleState, ExtractError> {
    Ok(ParticleState::new(resample_polyline(polyline, PARTICLE_COUNT)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_input_gives_exact_fractions() {
        let input: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64 / 4.0, 0.0, 0.0)).collect();
        let out = resample_arclength(&input).unwrap();
        for (i, p) in out.points().iter().enumerate() {
            assert!((p.x - i as f64 / 99.0).abs() < 1e-15, "{i}: {}", p.x);
        }
        assert_eq!(out.points()[0], input[0]);
        assert_eq!(out.points()[99], input[4]);
    }

    #[test]
    fn uniform_input_is_fixed_point() {
        let input: Vec<Vec3> = (0..100)
            .map(|i| {
                let t = i as f64 / 99.0;
                Vec3::new(t, 0.0, 0.0)
            })
            .collect();
        let out = resample_polyline(&input, 100).unwrap();
        for (a, b) in input.iter().zip(&out) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn duplicates_are_skipped_and_zero_length_rejected() {
        let p = Vec3::new(0.1, 0.2, 0.3);
        assert!(resample_polyline(&[p, p, p], 100).is_err());
        let out = resample_polyline(&[p, p, p + Vec3::x(), p + Vec3::x()], 3).unwrap();
        assert!((out[1] - (p + Vec3::x() * 0.5)).norm() < 1e-15);
    }
}
