//! Random forest on a two-moons style problem: held-out accuracy, per-tree
//! agreement and seed reproducibility.
//!
//! cargo run --release --example forest_classifier

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskgrid::learn::cv::predict_class;
use riskgrid::learn::{fit_forest, ForestParams};

fn moons(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let t = rng.random_range(0.0..std::f64::consts::PI);
        let class = i % 2;
        let (cx, cy) = if class == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        x.push(vec![cx + rng.random_range(-0.2..0.2), cy + rng.random_range(-0.2..0.2)]);
        y.push(class);
    }
    (x, y)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (x, y) = moons(&mut rng, 2000);
    let (xt, yt) = moons(&mut rng, 1000);

    for n_trees in [1, 10, 50] {
        let params = ForestParams { n_trees, max_depth: 10, min_leaf: 2, m_try: None, seed: 42 };
        let forest = fit_forest(&x, &y, 2, &params)?;
        let mut hits = 0;
        for (xi, &yi) in xt.iter().zip(&yt) {
            hits += usize::from(predict_class(&forest, xi)? == yi);
        }
        println!("{n_trees:>3} trees: held-out accuracy {:.4}", hits as f64 / yt.len() as f64);
    }

    let params = ForestParams { n_trees: 20, max_depth: 10, min_leaf: 2, m_try: None, seed: 42 };
    let a = fit_forest(&x, &y, 2, &params)?;
    let b = fit_forest(&x, &y, 2, &params)?;
    println!("\nsame seed, same forest: {}", a == b);
    let probe = [0.5, 0.25];
    println!("p({probe:?}) = {:?}", a.predict_proba(&probe)?);
    let votes: Vec<f64> = a.trees().iter().map(|t| t.predict_proba(&probe).map(|p| p[1])).collect::<Result<_, _>>()?;
    println!("per-tree p(class 1): {votes:.2?}");
    Ok(())
}
