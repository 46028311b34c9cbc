mod common;

use rand::Rng;

use riskgrid::data::Taxonomy;
use riskgrid::learn::{
    cross_validate, fit_forest, fit_linreg, fit_ovr, fit_tree, kfold_partition, polynomial_features, predict_ovr,
    ForestParams, LearnError, Learner, Node, TreeParams,
};
use riskgrid::rng::derive_seed;

use common::{compare_tree, oracle_tree, random_instance, rng, traversal_mean};

#[test]
fn shallow_trees_match_exhaustive_search() {
    let mut r = rng(101);
    for case in 0..60 {
        let n = r.random_range(10..=200);
        let d = r.random_range(1..=6);
        let k = r.random_range(2..=3);
        let depth = r.random_range(1..=2);
        let min_leaf = r.random_range(1..=4);
        let (x, y) = random_instance(&mut r, n, d, k);
        let tree = fit_tree(&x, &y, k, &TreeParams { max_depth: depth, min_leaf, m_try: d }, &mut rng(case)).unwrap();
        let oracle = oracle_tree(&x, &y, k, depth, min_leaf);
        compare_tree(&tree, &oracle).unwrap_or_else(|e| panic!("case {case} (n={n}, d={d}, k={k}): {e}"));
    }
}

#[test]
fn four_points_split_at_two_and_a_half() {
    let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
    let tree = fit_tree(&x, &[0, 0, 1, 1], 2, &TreeParams { max_depth: 3, min_leaf: 1, m_try: 1 }, &mut rng(0)).unwrap();
    match &tree.nodes()[0] {
        Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 2.5)),
        other => panic!("root is {other:?}"),
    }
}

#[test]
fn forest_is_the_mean_of_its_trees() {
    let mut r = rng(202);
    for case in 0..40 {
        let n = r.random_range(20..150);
        let d = r.random_range(1..5);
        let k = r.random_range(2..4);
        let (x, y) = random_instance(&mut r, n, d, k);
        let params = ForestParams {
            n_trees: r.random_range(1..20),
            max_depth: r.random_range(1..8),
            min_leaf: r.random_range(1..4),
            m_try: None,
            seed: case,
        };
        let forest = fit_forest(&x, &y, k, &params).unwrap();
        for _ in 0..10 {
            let q: Vec<f64> = (0..d).map(|_| r.random_range(-12.0..12.0)).collect();
            let got = forest.predict_proba(&q).unwrap();
            let want = traversal_mean(&forest, &q);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12, "case {case}: {got:?} vs {want:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn same_seed_same_forest() {
    let (x, y) = random_instance(&mut rng(3), 120, 4, 2);
    let params = ForestParams { n_trees: 9, seed: 42, ..Default::default() };
    let a = fit_forest(&x, &y, 2, &params).unwrap();
    let b = fit_forest(&x, &y, 2, &params).unwrap();
    assert_eq!(a, b);
    let c = fit_forest(&x, &y, 2, &ForestParams { seed: 43, ..params }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn identical_trees_average_to_that_tree() {
    let (x, y) = random_instance(&mut rng(4), 80, 3, 2);
    let f = fit_forest(&x, &y, 2, &ForestParams { n_trees: 1, ..Default::default() }).unwrap();
    let tree = f.trees()[0].clone();
    let triple = riskgrid::learn::RandomForest::from_trees(*f.params(), vec![tree.clone(), tree.clone(), tree.clone()]).unwrap();
    for row in &x {
        for (a, b) in triple.predict_proba(row).unwrap().iter().zip(tree.predict_proba(row).unwrap()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn forest_dimension_mismatch() {
    let (x, y) = random_instance(&mut rng(5), 30, 2, 2);
    let f = fit_forest(&x, &y, 2, &ForestParams { n_trees: 2, ..Default::default() }).unwrap();
    assert!(matches!(f.predict_proba(&[1.0]), Err(LearnError::Dimension { expected: 2, got: 1 })));
}

/// Plain gradient descent on the mean squared error of a standardized design.
fn gradient_descent_fit(x: &[Vec<f64>], y: &[f64], degree: usize) -> impl Fn(&[f64]) -> f64 {
    let z: Vec<Vec<f64>> = x.iter().map(|r| polynomial_features(r, degree).unwrap()).collect();
    let (n, p) = (z.len(), z[0].len());
    let means: Vec<f64> = (0..p).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let sds: Vec<f64> = (0..p)
        .map(|j| (z.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n as f64).sqrt())
        .collect();
    let s: Vec<Vec<f64>> = z.iter().map(|r| (0..p).map(|j| (r[j] - means[j]) / sds[j]).collect()).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut w = vec![0.0; p];
    let step = 1.0 / p as f64;
    for _ in 0..200_000 {
        let mut grad = vec![0.0; p];
        for (row, &t) in s.iter().zip(y) {
            let resid = row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + y_mean - t;
            for j in 0..p {
                grad[j] += resid * row[j] / n as f64;
            }
        }
        if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < 1e-13 {
            break;
        }
        for j in 0..p {
            w[j] -= step * grad[j];
        }
    }
    move |q: &[f64]| {
        let zq = polynomial_features(q, degree).unwrap();
        y_mean + (0..p).map(|j| w[j] * (zq[j] - means[j]) / sds[j]).sum::<f64>()
    }
}

#[test]
fn least_squares_matches_gradient_descent() {
    let mut r = rng(303);
    for case in 0..8 {
        let d = r.random_range(1..=3);
        let degree = r.random_range(1..=2);
        let n = 80;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|row| 1.5 + row.iter().enumerate().map(|(j, v)| (j as f64 - 0.7) * v).sum::<f64>() + r.random_range(-1.0..1.0))
            .collect();
        let model = fit_linreg(&x, &y, degree).unwrap();
        let oracle = gradient_descent_fit(&x, &y, degree);
        for _ in 0..20 {
            let q: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let (a, b) = (model.predict(&q).unwrap(), oracle(&q));
            assert!((a - b).abs() < 1e-4, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn noiseless_quadratic_is_recovered() {
    let mut r = rng(404);
    let x: Vec<Vec<f64>> = (0..50).map(|_| vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect();
    // Terms in expansion order: a, b, a^2, ab, b^2.
    let truth = [0.5, -2.0, 1.25, 0.75, -0.3];
    let f = |v: &[f64]| 4.0 + truth[0] * v[0] + truth[1] * v[1] + truth[2] * v[0] * v[0] + truth[3] * v[0] * v[1] + truth[4] * v[1] * v[1];
    let y: Vec<f64> = x.iter().map(|v| f(v)).collect();
    let m = fit_linreg(&x, &y, 2).unwrap();
    for (row, t) in x.iter().zip(&y) {
        assert!((m.predict(row).unwrap() - t).abs() < 1e-6);
    }
    for (c, t) in m.raw_coefficients().iter().zip(truth) {
        assert!((c - t).abs() < 1e-6, "{c} vs {t}");
    }
    assert!((m.raw_intercept() - 4.0).abs() < 1e-6);
    assert!(m.residual_sigma < 1e-6);
}

#[test]
fn ovr_equals_independent_binary_forests() {
    let mut r = rng(505);
    let tax = Taxonomy::new(["a", "b", "c", "d"]).unwrap();
    let x: Vec<Vec<f64>> = (0..150).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    let sets: Vec<Vec<usize>> = x
        .iter()
        .map(|v| {
            let mut s = Vec::new();
            if v[0] > 0.5 {
                s.push(0);
            }
            if v[1] > 0.3 && r.random_bool(0.8) {
                s.push(1);
            }
            if r.random_bool(0.2) {
                s.push(2);
            }
            s
        })
        .collect();
    let params = ForestParams { n_trees: 15, max_depth: 6, min_leaf: 2, m_try: None, seed: 99 };
    let model = fit_ovr(&x, &sets, &tax, &params).unwrap();
    assert_eq!(model.absent_labels, vec!["d".to_string()]);
    for l in 0..tax.len() {
        let y: Vec<usize> = sets.iter().map(|s| usize::from(s.contains(&l))).collect();
        let single = fit_forest(&x, &y, 2, &ForestParams { seed: derive_seed(99, l as u64), ..params }).unwrap();
        for _ in 0..25 {
            let q = vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
            assert_eq!(predict_ovr(&model, &q).unwrap()[l], single.predict_proba(&q).unwrap()[1]);
        }
    }
}

#[test]
fn kfold_partition_is_a_balanced_permutation() {
    for (n, k) in [(10, 2), (17, 5), (100, 10), (7, 7)] {
        let folds = kfold_partition(n, k, 9).unwrap();
        assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
        assert_eq!(folds, kfold_partition(n, k, 9).unwrap());
    }
    assert!(kfold_partition(5, 6, 0).is_err());
    assert!(kfold_partition(5, 1, 0).is_err());
}

/// Scores each fold by the fraction of test rows whose target is even, and
/// checks that train and test never overlap.
struct Parity;

impl Learner for Parity {
    type Target = usize;
    fn name(&self) -> &str {
        "parity"
    }
    fn metric(&self) -> &str {
        "even_fraction"
    }
    fn fit_score(&self, _: &[Vec<f64>], yt: &[usize], _: &[Vec<f64>], ys: &[usize], _: usize) -> Result<f64, LearnError> {
        assert!(ys.iter().all(|v| !yt.contains(v)));
        Ok(ys.iter().filter(|&&v| v % 2 == 0).count() as f64 / ys.len() as f64)
    }
}

#[test]
fn cv_mean_and_std_recomputed() {
    let n = 53;
    let x: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
    let y: Vec<usize> = (0..n).collect();
    let report = cross_validate(&Parity, &x, &y, 6, 17).unwrap();
    let row = report.row("parity").unwrap();
    let folds = kfold_partition(n, 6, 17).unwrap();
    let expect: Vec<f64> = folds
        .iter()
        .map(|f| f.iter().filter(|&&i| i % 2 == 0).count() as f64 / f.len() as f64)
        .collect();
    assert_eq!(row.fold_scores, expect);
    let mean = expect.iter().sum::<f64>() / 6.0;
    let std = (expect.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
    assert!((row.mean - mean).abs() < 1e-15);
    assert!((row.std - std).abs() < 1e-15);
}
