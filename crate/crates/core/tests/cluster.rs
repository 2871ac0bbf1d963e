use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skycast_core::cluster::{
    adjusted_rand_index, assign, build_features, kmeans_fit, ClusterError, ClusterModel, FeatureMatrix,
};
use skycast_core::time::to_epoch_day;
use skycast_core::{CellKey, StoreSnapshot};
use skycast_testkit::oracles::{adjusted_rand_index as oracle_ari, three_blobs};
use skycast_testkit::synth::grid_csv;

fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix {
    let n = rows.len();
    let names = ["f0", "f1", "f2", "f3", "f4"];
    let d = rows.first().map_or(0, Vec::len);
    FeatureMatrix::from_rows(&names[..d], (0..n).map(|i| CellKey::new(i, 0)).collect(), (0..n).collect(), rows)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn sse(rows: &[&Vec<f64>]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    rows.iter().map(|r| sq(r, &mean)).sum()
}

fn same_partition(a: &[usize], b: &[usize]) -> bool {
    (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

fn check_model(fm: &FeatureMatrix, m: &ClusterModel) {
    for w in m.inertia_history.windows(2) {
        assert!(w[1] <= w[0], "inertia rose: {:?}", m.inertia_history);
    }
    let mut recomputed = 0.0;
    for (row, &label) in fm.rows.iter().zip(&m.assignments) {
        let dists: Vec<f64> = m.centroids.iter().map(|c| sq(c, row)).collect();
        let best = dists.iter().copied().fold(f64::INFINITY, f64::min);
        let first = dists.iter().position(|&d| d == best).unwrap();
        assert_eq!(label, first);
        recomputed += dists[label];
    }
    assert!((recomputed - m.inertia).abs() <= 1e-9 * recomputed.max(1e-300) || recomputed == m.inertia);
}

#[test]
fn two_pairs_reach_the_partition_optimum() {
    let fm = matrix(vec![vec![0.0, 0.0], vec![0.5, 0.2], vec![9.0, 9.5], vec![9.4, 9.1]]);
    let m = kmeans_fit(&fm, 2, 3).unwrap();
    assert!(same_partition(&m.assignments, &[0, 0, 1, 1]));
    // every split of 4 rows into two non-empty groups
    let mut best = f64::INFINITY;
    for mask in 1u32..15 {
        let (a, b): (Vec<_>, Vec<_>) = fm.rows.iter().enumerate().partition(|(i, _)| mask >> i & 1 == 1);
        let a: Vec<&Vec<f64>> = a.into_iter().map(|p| p.1).collect();
        let b: Vec<&Vec<f64>> = b.into_iter().map(|p| p.1).collect();
        best = best.min(sse(&a) + sse(&b));
    }
    assert!((m.inertia - best).abs() <= 1e-9 * best);
    check_model(&fm, &m);
}

#[test]
fn fits_are_deterministic_to_the_byte() {
    let (rows, _) = three_blobs(11);
    let fm = matrix(rows);
    for seed in [0, 1, 42] {
        let a = serde_json::to_vec(&kmeans_fit(&fm, 4, seed).unwrap().export()).unwrap();
        let b = serde_json::to_vec(&kmeans_fit(&fm, 4, seed).unwrap().export()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn row_permutation_permutes_assignments() {
    let (rows, _) = three_blobs(5);
    let fm = matrix(rows.clone());
    let base = kmeans_fit(&fm, 5, 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let shuffled = matrix(perm.iter().map(|&i| rows[i].clone()).collect());
        let m = kmeans_fit(&shuffled, 5, 7).unwrap();
        let back: Vec<usize> = {
            let mut v = vec![0; perm.len()];
            for (pos, &orig) in perm.iter().enumerate() {
                v[orig] = m.assignments[pos];
            }
            v
        };
        assert!(same_partition(&back, &base.assignments));
        // standardization sums run in row order, so only ulps may differ
        assert!((m.inertia - base.inertia).abs() <= 1e-9 * base.inertia);
    }
}

#[test]
fn separated_gaussians_are_recovered() {
    let mut aris: Vec<f64> = (0..10)
        .map(|seed| {
            let (rows, truth) = three_blobs(1000 + seed);
            let fm = matrix(rows);
            let m = kmeans_fit(&fm, 3, seed).unwrap();
            check_model(&fm, &m);
            let ari = adjusted_rand_index(&m.assignments, &truth);
            assert!((ari - oracle_ari(&m.assignments, &truth)).abs() < 1e-12);
            ari
        })
        .collect();
    aris.sort_by(f64::total_cmp);
    let median = (aris[4] + aris[5]) / 2.0;
    assert!(median >= 0.9, "median ARI {median}, all {aris:?}");
}

#[test]
fn assign_matches_distance_scan() {
    let (rows, _) = three_blobs(3);
    let fm = matrix(rows);
    let m = kmeans_fit(&fm, 4, 1).unwrap();
    assert_eq!(assign(&m, &m.centroids[2]).unwrap(), 2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let v = vec![rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let d: Vec<f64> = m.centroids.iter().map(|c| sq(c, &v)).collect();
        let best = d.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(assign(&m, &v).unwrap(), d.iter().position(|&x| x == best).unwrap());
    }
    assert_eq!(
        assign(&m, &[0.0]),
        Err(ClusterError::DimensionMismatch { expected: 2, got: 1 })
    );

    // midpoint of two centroids goes to the lower id
    let sym = matrix(vec![vec![-1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
    let mut tied = kmeans_fit(&sym, 2, 0).unwrap();
    tied.centroids = vec![vec![-1.0, 0.0], vec![1.0, 0.0]];
    assert_eq!(assign(&tied, &[0.0, 0.5]).unwrap(), 0);
}

fn d(y: i32, m: u32, day: u32) -> i64 {
    to_epoch_day(chrono::NaiveDate::from_ymd_opt(y, m, day).unwrap())
}

#[test]
fn features_match_hand_computation() {
    let days = [d(2000, 1, 1), d(2000, 1, 2), d(2000, 7, 1), d(2001, 1, 1), d(2001, 7, 1)];
    let temp_a = [10.0, 12.0, 25.0, 13.0, 27.0];
    let rain_a = [3.0, 1.0, 0.0, 6.0, 2.0];
    let csv = grid_csv(&["temp", "rain"], &days, &[0.0], &[0.0, 1.0, 2.0], |k, t, _, lo| match (k, lo) {
        (0, 0) => Some(temp_a[t]),
        (1, 0) => Some(rain_a[t]),
        (0, 1) => Some(20.0),
        (1, 1) => Some(0.0),
        (0, 2) => Some(5.0),
        _ => None,
    });
    let s = StoreSnapshot::empty().ingest_csv(&csv, "hand").unwrap();
    let fm = build_features(&s).unwrap();
    assert_eq!(fm.cells, [CellKey::new(0, 0), CellKey::new(0, 1)]);
    assert_eq!(fm.excluded, [CellKey::new(0, 2)]);
    // A: Januaries 11 and 13 -> 12, Julys 25 and 27 -> 26; mean 19, amplitude 14.
    //    Monthly rain totals 4, 0, 6, 2: mean 3, population variance 5.
    assert_eq!(fm.raw[0], [19.0, 14.0, 3.0, 5.0]);
    assert_eq!(fm.raw[1], [20.0, 0.0, 0.0, 0.0]);
    assert_eq!(fm.mu, [19.5, 7.0, 1.5, 2.5]);
    assert_eq!(fm.sigma, [0.5, 7.0, 1.5, 2.5]);
    assert_eq!(fm.rows, [vec![-1.0, 1.0, 1.0, 1.0], vec![1.0, -1.0, -1.0, -1.0]]);

    let temp_only = grid_csv(&["temp"], &days[..1], &[0.0], &[0.0], |_, _, _, _| Some(1.0));
    let s = StoreSnapshot::empty().ingest_csv(&temp_only, "t").unwrap();
    assert_eq!(build_features(&s), Err(ClusterError::NoQualifyingCells));
    assert_eq!(build_features(&StoreSnapshot::empty()), Err(ClusterError::NoQualifyingCells));
}

#[test]
fn export_carries_cell_indices() {
    let fm = FeatureMatrix::from_rows(
        &["x"],
        vec![CellKey::new(0, 1), CellKey::new(2, 0), CellKey::new(3, 3)],
        vec![1, 8, 15],
        vec![vec![0.0], vec![0.1], vec![5.0]],
    );
    let e = kmeans_fit(&fm, 2, 0).unwrap().export();
    assert_eq!(e.assignments.keys().copied().collect::<Vec<_>>(), [1, 8, 15]);
    assert_eq!(e.assignments[&1], e.assignments[&8]);
    assert_ne!(e.assignments[&1], e.assignments[&15]);
    let json = serde_json::to_value(&e).unwrap();
    for key in ["k", "feature_names", "mu", "sigma", "centroids", "assignments", "inertia", "seed"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn lloyd_never_increases_inertia(
        rows in (1usize..=4).prop_flat_map(|d| proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, d), 2..60)),
        k in 1usize..8,
        seed in any::<u64>(),
    ) {
        let fm = matrix(rows);
        prop_assume!(fm.dims() > 0);
        let k = k.min(fm.len());
        let m = kmeans_fit(&fm, k, seed).unwrap();
        prop_assert!(m.iterations <= 100);
        check_model(&fm, &m);
    }
}
