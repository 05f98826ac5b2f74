#[path = "support/lof_oracle.rs"]
mod lof_oracle;

use lof_oracle::lof_bruteforce;
use nft_audit::lof::{knn, lof, lof_with, FeaturePoint, LofError, LofParams, LofScore, Reachability};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn assert_agree(fast: &[LofScore], slow: &[LofScore]) {
    assert_eq!(fast.len(), slow.len());
    for (f, s) in fast.iter().zip(slow) {
        assert_eq!(f.id, s.id);
        assert_eq!(f.neighbors, s.neighbors, "{}", f.id);
        assert!(close(f.k_distance, s.k_distance), "{f:?} vs {s:?}");
        assert!(close(f.lrd, s.lrd), "{f:?} vs {s:?}");
        assert!(close(f.lof, s.lof), "{f:?} vs {s:?}");
    }
}

fn points(rows: &[Vec<f64>]) -> Vec<FeaturePoint> {
    rows.iter()
        .enumerate()
        .map(|(i, c)| FeaturePoint::new(format!("p{i}"), c.clone()))
        .collect()
}

/// Random cloud; with `dup_heavy` coordinates are drawn from a tiny lattice
/// so exact duplicates and distance ties are common.
fn cloud(rng: &mut ChaCha8Rng, n: usize, dim: usize, dup_heavy: bool) -> Vec<FeaturePoint> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if dup_heavy {
                        rng.random_range(0..3) as f64
                    } else {
                        rng.random_range(-10.0..10.0)
                    }
                })
                .collect()
        })
        .collect();
    points(&rows)
}

#[test]
fn indexed_matches_bruteforce_on_random_clouds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..150 {
        let n = rng.random_range(25..=150);
        let dim = rng.random_range(2..=8);
        let k = rng.random_range(1..=20);
        let pts = cloud(&mut rng, n, dim, case % 3 == 0);
        for rule in [Reachability::Neighbor, Reachability::Query] {
            let params = LofParams { k, reachability: rule };
            assert_agree(&lof_with(&pts, params).unwrap(), &lof_bruteforce(&pts, params));
        }
    }
}

#[test]
fn scores_are_never_nan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let pts = cloud(&mut rng, 40, 2, true);
        for s in lof(&pts, 5).unwrap() {
            assert!(!s.lof.is_nan() && s.lof >= 0.0);
        }
    }
}

#[test]
fn all_duplicates_score_one() {
    let pts = points(&vec![vec![1.0, 2.0, 3.0]; 30]);
    assert!(lof(&pts, 20).unwrap().iter().all(|s| s.lof == 1.0));
}

#[test]
fn knn_includes_ties() {
    // Centre with four neighbours at distance 1: k = 2 still returns all four.
    let pts = points(&[
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![-1.0, 0.0],
        vec![0.0, 1.0],
        vec![0.0, -1.0],
    ]);
    let sets = knn(&pts, 2).unwrap();
    assert_eq!(sets[0].members.len(), 4);
    assert_eq!(sets[0].k_distance, 1.0);
}

#[test]
fn too_few_points_is_an_error() {
    let pts = points(&[vec![0.0], vec![1.0]]);
    assert!(matches!(lof(&pts, 2), Err(LofError::InsufficientPoints { .. })));
}

#[test]
fn grid_interior_is_uniform() {
    let rows: Vec<Vec<f64>> = (0..32)
        .flat_map(|x| (0..32).map(move |y| vec![x as f64, y as f64]))
        .collect();
    let scores = lof(&points(&rows), 20).unwrap();
    // A score depends on points up to three k-distances (3 * sqrt 5) away;
    // interior points have that whole radius inside the grid.
    for (row, s) in rows.iter().zip(&scores) {
        if row.iter().all(|&c| (7.0..=24.0).contains(&c)) {
            assert!((0.95..=1.05).contains(&s.lof), "{row:?}: {}", s.lof);
        }
    }
}

#[test]
fn isolated_point_gets_the_top_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rows: Vec<Vec<f64>> = (0..100)
        .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
        .collect();
    rows.push(vec![10.0, 10.0]);
    let scores = lof(&points(&rows), 10).unwrap();
    let top = scores
        .iter()
        .max_by(|a, b| a.lof.total_cmp(&b.lof))
        .unwrap();
    assert_eq!(top.id, "p100");
    assert!(top.lof > 2.0);
}

fn transform(pts: &[FeaturePoint], f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<FeaturePoint> {
    pts.iter()
        .map(|p| FeaturePoint::new(p.id.clone(), f(&p.coords)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_under_rigid_motion_and_scaling(
        seed in any::<u64>(),
        angle in 0.0..std::f64::consts::TAU,
        shift in (-50.0..50.0f64, -50.0..50.0f64),
        scale in 0.01..100.0f64,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = cloud(&mut rng, 60, 2, false);
        let (c, s) = (angle.cos(), angle.sin());
        let moved = transform(&pts, |p| vec![
            scale * (c * p[0] - s * p[1]) + shift.0,
            scale * (s * p[0] + c * p[1]) + shift.1,
        ]);
        let a = lof(&pts, 7).unwrap();
        let b = lof(&moved, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.lof - y.lof).abs() <= 1e-6 * x.lof.max(1.0), "{} vs {}", x.lof, y.lof);
        }
    }

    #[test]
    fn moving_an_outlier_away_never_lowers_its_score(seed in any::<u64>(), d in 5.0..50.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = cloud(&mut rng, 50, 3, false);
        pts.push(FeaturePoint::new("out", vec![d, d, d]));
        let near = lof(&pts, 10).unwrap()[50].lof;
        pts[50].coords = vec![2.0 * d, 2.0 * d, 2.0 * d];
        let far = lof(&pts, 10).unwrap()[50].lof;
        prop_assert!(far >= near - 1e-9, "{near} -> {far}");
    }

    #[test]
    fn permuting_input_permutes_scores(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = cloud(&mut rng, 40, 2, seed % 2 == 0);
        let mut rev = pts.clone();
        rev.reverse();
        let a = lof(&pts, 5).unwrap();
        let mut b = lof(&rev, 5).unwrap();
        b.reverse();
        prop_assert_eq!(a, b);
    }
}

