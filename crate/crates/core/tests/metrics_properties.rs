use proptest::prelude::*;
use ropetwin::knot::settled_overhand_state;
use ropetwin::math::{Quat, Vec3};
use ropetwin::metrics::{crossing_agreement, crossings, evaluate_knn, is_untangled, knn_predict, l1_error, KnnParams, MetricsError};
use ropetwin::par::Execution;
use ropetwin::playback::StateActionChunk;
use ropetwin::state::ActionRow;
use ropetwin::ParticleState;

fn random_walk() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.001f64..0.02, any::<bool>()), 100).prop_map(|steps| {
        let mut p = Vec3::zeros();
        steps
            .into_iter()
            .map(|(dx, dy, z, neg)| {
                p += Vec3::new(dx, dy, 0.0) * 0.02;
                // distinct nonzero heights keep every crossing strictly layered
                Vec3::new(p.x, p.y, if neg { -z } else { z })
            })
            .collect()
    })
}

fn row() -> impl Strategy<Value = ActionRow> {
    prop::array::uniform16(-1.0f64..1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crossing_count_survives_rigid_planar_motion(pts in random_walk(), angle in 0.0f64..6.28, tx in -1.0f64..1.0, ty in -1.0f64..1.0) {
        let s = ParticleState::new(pts.clone()).unwrap();
        let q = Quat::from_axis_angle(&Vec3::z_axis(), angle);
        let moved = ParticleState::new(pts.iter().map(|p| q * p + Vec3::new(tx, ty, 0.0)).collect()).unwrap();
        prop_assert_eq!(crossings(&s).len(), crossings(&moved).len());
    }

    #[test]
    fn negating_z_flips_every_crossing(pts in random_walk()) {
        let s = ParticleState::new(pts.clone()).unwrap();
        let flipped = ParticleState::new(pts.iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect()).unwrap();
        let (a, b) = (crossings(&s), crossings(&flipped));
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.seg_a, x.seg_b), (y.seg_a, y.seg_b));
            prop_assert_eq!(x.point, y.point);
            prop_assert!(x.sign == 1 || x.sign == -1);
            prop_assert!(x.seg_b >= x.seg_a + 2);
            prop_assert!(x.a_over != y.a_over);
            // the mirror image has the opposite crossing sign
            prop_assert_eq!(x.sign, -y.sign);
        }
    }

    #[test]
    fn l1_is_a_pseudometric(a in row(), b in row(), c in row(), head in row()) {
        let chunk = |last: ActionRow| vec![head, last];
        let (ab, ba) = (l1_error(&chunk(a), &chunk(b)).unwrap(), l1_error(&chunk(b), &chunk(a)).unwrap());
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(l1_error(&chunk(a), &chunk(a)).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        let (bc, ac) = (l1_error(&chunk(b), &chunk(c)).unwrap(), l1_error(&chunk(a), &chunk(c)).unwrap());
        prop_assert!(ac <= ab + bc + 1e-12);
        // rows before the last do not count
        prop_assert_eq!(l1_error(&[a, c], &[b, c]).unwrap(), 0.0);
    }

    #[test]
    fn knn_retrieves_every_training_chunk_exactly(walks in prop::collection::vec(random_walk(), 2..6), rows in prop::collection::vec(row(), 3)) {
        let train: Vec<StateActionChunk> = walks
            .into_iter()
            .enumerate()
            .map(|(i, w)| StateActionChunk {
                demo: format!("d{i}"),
                frame: i,
                state: ParticleState::new(w).unwrap(),
                q: rows[0],
                actions: vec![rows[1], rows[2].map(|v| v + i as f64)],
            })
            .collect();
        for c in &train {
            let pred = knn_predict(&c.state, &c.q, &train, &KnnParams::default()).unwrap();
            prop_assert_eq!(&pred, &c.actions);
            prop_assert_eq!(l1_error(&pred, &c.actions).unwrap(), 0.0);
        }
    }
}

fn chunk(demo: &str, frame: usize, offset: f64, label: f64) -> StateActionChunk {
    let pts = (0..100).map(|i| Vec3::new(i as f64 * 0.01, offset, 0.0)).collect();
    StateActionChunk {
        demo: demo.into(),
        frame,
        state: ParticleState::new(pts).unwrap(),
        q: [0.0; 16],
        actions: vec![[label; 16]; 2],
    }
}

#[test]
fn nearest_candidate_wins_and_ties_are_ordered() {
    let query = chunk("q", 0, 0.0, 0.0).state;
    let train = vec![chunk("b", 0, 0.02, 2.0), chunk("a", 0, 0.01, 1.0)];
    assert_eq!(knn_predict(&query, &[0.0; 16], &train, &KnnParams::default()).unwrap()[0][0], 1.0);
    let tie = vec![chunk("b", 0, 0.01, 2.0), chunk("a", 3, 0.01, 3.0), chunk("a", 1, -0.01, 1.0)];
    assert_eq!(knn_predict(&query, &[0.0; 16], &tie, &KnnParams::default()).unwrap()[0][0], 1.0);
    assert!(matches!(knn_predict(&query, &[0.0; 16], &[], &KnnParams::default()), Err(MetricsError::NoData)));
}

#[test]
fn two_neighbours_average_positions_but_not_quaternions() {
    let query = chunk("q", 0, 0.0, 0.0).state;
    let train = vec![chunk("a", 0, 0.01, 1.0), chunk("b", 0, 0.02, 3.0)];
    let pred = knn_predict(&query, &[0.0; 16], &train, &KnnParams { neighbors: 2, q_weight: 0.0 }).unwrap();
    assert_eq!(pred[1][0], 2.0);
    assert_eq!(pred[1][7], 2.0);
    assert_eq!(pred[1][3], 1.0);
}

#[test]
fn eval_report_on_held_out_queries() {
    let train = vec![chunk("a", 0, 0.0, 1.0), chunk("a", 1, 0.05, 2.0)];
    let test = vec![chunk("t", 0, 0.01, 1.5), chunk("t", 1, 0.04, 2.5)];
    let report = evaluate_knn(&test, &train, &KnnParams::default(), Execution::default()).unwrap();
    assert_eq!(report.aggregate.count, 2);
    assert!((report.aggregate.mean - 0.5).abs() < 1e-12);
    assert_eq!(report.aggregate.std, 0.0);
    assert_eq!(report.per_chunk[1].demo, "t");
}

#[test]
fn generated_knot_has_three_same_sign_crossings() {
    for seed in 0..4 {
        let s = settled_overhand_state(seed).unwrap();
        let c = crossings(&s);
        assert_eq!(c.len(), 3, "seed {seed}");
        assert!(c.iter().all(|x| x.sign == c[0].sign), "seed {seed}");
        assert!(!is_untangled(&s));
        // an over-under pattern that alternates along the rope
        let mut passes: Vec<(usize, bool)> = c.iter().flat_map(|x| [(x.seg_a, x.a_over), (x.seg_b, !x.a_over)]).collect();
        passes.sort();
        assert!(passes.windows(2).all(|w| w[0].1 != w[1].1), "seed {seed}: {passes:?}");
    }
}

#[test]
fn mirrored_heights_break_layer_agreement() {
    let s = settled_overhand_state(5).unwrap();
    let truth = s.points();
    let mirrored: Vec<Vec3> = truth.iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
    let same = crossing_agreement(truth, truth, 0.01);
    assert!(same.exact());
    let flipped = crossing_agreement(&mirrored, truth, 0.01);
    assert_eq!((flipped.matched, flipped.layer_correct), (3, 0));
}
