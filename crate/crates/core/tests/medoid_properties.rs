use factorplan::similarity::{
    distance, kmedoids, kmedoids_matrix, DistanceMatrix, MedoidMode, Metric,
};
use factorplan::FactorValue;
use itertools::Itertools;
use proptest::prelude::*;

fn points(dim: usize, n: usize) -> impl Strategy<Value = Vec<FactorValue>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n).prop_map(|pts| {
        pts.into_iter()
            .enumerate()
            .map(|(i, p)| FactorValue::new(format!("p{i}")).with_vector(p))
            .collect()
    })
}

fn unit_quaternion() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("nonzero", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-3)
        .prop_map(|q| {
            let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            q.map(|x| x / n)
        })
}

/// Brute-force optimum, written independently of the library's search.
fn oracle_objective(m: &DistanceMatrix<f64>, k: usize) -> f64 {
    (0..m.len())
        .combinations(k)
        .map(|set| {
            (0..m.len())
                .map(|p| set.iter().map(|&s| m.get(p, s)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

fn matrix_of(values: &[FactorValue]) -> DistanceMatrix<f64> {
    DistanceMatrix::from_fn(values.len(), |i, j| {
        distance::<f64>(&values[i], &values[j], Metric::Euclidean).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn euclidean_is_a_metric(v in points(3, 3)) {
        let d = |i: usize, j: usize| distance::<f64>(&v[i], &v[j], Metric::Euclidean).unwrap();
        prop_assert_eq!(d(0, 0), 0.0);
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }

    #[test]
    fn quaternion_angle_is_a_metric(a in unit_quaternion(), b in unit_quaternion(), c in unit_quaternion()) {
        let v: Vec<_> = [a, b, c].iter().enumerate()
            .map(|(i, q)| FactorValue::new(format!("q{i}")).with_quaternion(*q))
            .collect();
        let d = |i: usize, j: usize| distance::<f64>(&v[i], &v[j], Metric::QuaternionAngular).unwrap();
        prop_assert!(d(0, 0).abs() < 1e-6);
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert!(d(0, 1) >= 0.0 && d(0, 1) <= std::f64::consts::PI + 1e-12);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-9);
        // q and -q are the same rotation
        let neg = FactorValue::new("neg").with_quaternion(a.map(|x| -x));
        prop_assert!(distance::<f64>(&v[0], &neg, Metric::QuaternionAngular).unwrap() < 1e-6);
    }

    #[test]
    fn discrete_is_a_metric(ids in prop::collection::vec(0u8..3, 3)) {
        let v: Vec<_> = ids.iter().map(|i| FactorValue::new(format!("v{i}"))).collect();
        let d = |i: usize, j: usize| distance::<f64>(&v[i], &v[j], Metric::Discrete).unwrap();
        prop_assert_eq!(d(0, 1), d(1, 0));
        prop_assert_eq!(d(0, 1), if ids[0] == ids[1] { 0.0 } else { 1.0 });
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2));
    }

    #[test]
    fn exact_matches_brute_force((v, k) in (1usize..=10).prop_flat_map(|n| (points(3, n), 1..=n))) {
        let m = matrix_of(&v);
        let got = kmedoids_matrix(&m, k, MedoidMode::Exact, 0, None).unwrap();
        prop_assert!((got.objective - oracle_objective(&m, k)).abs() < 1e-9);
    }

    #[test]
    fn pam_never_beats_exact_and_ties_when_small(v in (1usize..=6).prop_flat_map(|n| points(2, n)), k in 1usize..=6, seed in any::<u64>()) {
        let k = k.min(v.len());
        let exact = kmedoids::<f64>(&v, k, Metric::Euclidean, MedoidMode::Exact, 0).unwrap();
        let pam = kmedoids::<f64>(&v, k, Metric::Euclidean, MedoidMode::Pam, seed).unwrap();
        prop_assert!(pam.objective >= exact.objective - 1e-9);
        prop_assert!((pam.objective - exact.objective).abs() < 1e-9,
            "pam {} exact {} on {} values, k={}", pam.objective, exact.objective, v.len(), k);
    }

    #[test]
    fn exact_objective_nonincreasing_in_k(v in (2usize..=8).prop_flat_map(|n| points(3, n))) {
        let objs: Vec<f64> = (1..=v.len())
            .map(|k| kmedoids::<f64>(&v, k, Metric::Euclidean, MedoidMode::Exact, 0).unwrap().objective)
            .collect();
        prop_assert!(objs.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(objs.last().unwrap().abs() < 1e-12);
    }

    #[test]
    fn fixed_medoid_is_kept(v in (2usize..=8).prop_flat_map(|n| points(3, n)), k in 1usize..=8, f in 0usize..8, seed in any::<u64>()) {
        let k = k.min(v.len());
        let f = f % v.len();
        let m = matrix_of(&v);
        for mode in [MedoidMode::Exact, MedoidMode::Pam] {
            let got = kmedoids_matrix(&m, k, mode, seed, Some(f)).unwrap();
            prop_assert!(got.chosen.contains(&f));
            prop_assert_eq!(got.chosen.len(), k);
        }
    }
}

#[test]
fn exact_refuses_large_inputs() {
    let v: Vec<_> = (0..21).map(|i| FactorValue::new(format!("v{i}")).with_vector(vec![i as f64])).collect();
    assert!(kmedoids::<f64>(&v, 3, Metric::Euclidean, MedoidMode::Exact, 0).is_err());
    assert!(kmedoids::<f64>(&v, 3, Metric::Euclidean, MedoidMode::Pam, 0).is_ok());
}

#[test]
fn integer_matrices_work() {
    let m = DistanceMatrix::from_fn(5, |i, j| (i as i64 - j as i64).abs());
    let got = kmedoids_matrix(&m, 1, MedoidMode::Exact, 0, None).unwrap();
    assert_eq!((got.chosen, got.objective), (vec![2], 6));
}
