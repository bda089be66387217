use proptest::prelude::*;

use prio_core::oracle::{solve_truncated_ctmc, TruncatedGenerator, DEFAULT_BAND_CAP};
use prio_core::{build_cuboid, solve, PrioritySystem, TruncationCuboid};

/// Dense Gaussian elimination on `pi Q = 0` with the last equation replaced by
/// normalization.
fn dense_stationary(q: &[Vec<f64>]) -> Vec<f64> {
    let n = q.len();
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| q[i][j]).collect()).collect();
    let mut b = vec![0.0; n];
    a[n - 1] = vec![1.0; n];
    b[n - 1] = 1.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

fn system_strategy() -> impl Strategy<Value = PrioritySystem> {
    (2usize..=3)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.05f64..1.0, n),
                prop::collection::vec(0.5f64..2.0, n),
                0.2f64..0.85,
            )
        })
        .prop_map(|(shares, mu, rho)| {
            let total: f64 = shares.iter().sum();
            let lambda: Vec<f64> = shares.iter().zip(&mu).map(|(s, m)| rho * s / total * m).collect();
            PrioritySystem::new(lambda, mu).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursion_matches_truncated_chain(s in system_strategy()) {
        let (cuboid, joint) = build_cuboid(&s, 1e-9, 2_000_000).unwrap();
        prop_assume!(TruncatedGenerator::new(&s, &cuboid).unwrap().band_size() < 20_000_000);
        let ctmc = solve_truncated_ctmc(&s, &cuboid, DEFAULT_BAND_CAP).unwrap();
        let tv = joint.total_variation(&ctmc);
        prop_assert!(tv < 1e-7, "tv {}", tv);
    }

    #[test]
    fn banded_elimination_matches_dense_solve(s in system_strategy(), b in prop::collection::vec(1usize..5, 3)) {
        let bounds = b[..s.num_classes()].to_vec();
        let cuboid = TruncationCuboid::new(bounds, 1e-6).unwrap();
        let generator = TruncatedGenerator::new(&s, &cuboid).unwrap();
        let banded = generator.stationary(DEFAULT_BAND_CAP).unwrap();
        let dense = dense_stationary(&generator.dense());
        for (x, y) in banded.data().iter().zip(&dense) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn small_cuboid_entries_agree_with_large_cuboid() {
    let s = PrioritySystem::new(vec![0.2, 0.3, 0.1], vec![1.0, 1.5, 0.8]).unwrap();
    let small = solve(&s, &TruncationCuboid::new(vec![5, 4, 3], 1e-6).unwrap()).unwrap();
    let large = solve(&s, &TruncationCuboid::new(vec![30, 20, 10], 1e-6).unwrap()).unwrap();
    for state in small.probabilities().indices() {
        assert_eq!(small.probability(&state), large.probability(&state));
    }
}
