//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use num_rational::Ratio;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use riskgrid::data::{synth_generate, SynthConfig, SynthOutput};
use riskgrid::features::{featurize, label_cells};
use riskgrid::learn::{DecisionTree, Node, RandomForest};
use riskgrid::riskmodel::{poi_fingerprint, train_all, WccewsModel};
use riskgrid::service::Config;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bundled_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("config/synthetic.toml")
}

pub fn bundled_config() -> Config {
    Config::load(&bundled_config_path()).expect("bundled config parses")
}

/// A few hundred precision-7 cells with a learnable signal; trains in well under a second.
pub const SMALL_TOML: &str = r#"
[synth]
seed = 7
precision = 7
incident_rate = 1.5
features = { kernel_sigma_m = 300.0, distance_cap_m = 50000.0 }
bbox = { min_lat = 40.700, max_lat = 40.727, min_lon = -74.020, max_lon = -73.984 }
poi = [
  { category = "investment_advisers", count = 60 },
  { category = "liquor_licenses", count = 60 },
  { category = "tax_exempt_orgs", count = 60 },
]

[synth.crime]
bias = -2.0
weights = { kde_investment_advisers = 1.5, kde_liquor_licenses = 1.0 }

[synth.fine]
intercept = 5.0
sigma = 0.2
coefficients = { dist_investment_advisers_m = -0.002 }

[[synth.types]]
label = "fraud"
bias = 0.0
weights = { kde_liquor_licenses = 1.0 }

[[synth.types]]
label = "insider_trading"
bias = -0.5
weights = { kde_investment_advisers = 1.0 }

[train]
fine_degree = 1
negative_ratio = 3.0
cv_folds = 3
forest = { n_trees = 12, max_depth = 8, min_leaf = 2, seed = 11 }
"#;

pub fn small_config() -> Config {
    Config::from_toml(SMALL_TOML).expect("small config parses")
}

pub fn synth_of(config: &Config) -> (SynthConfig, SynthOutput) {
    let cfg = config.synth.clone().expect("config has [synth]");
    let out = synth_generate(&cfg).expect("synth");
    (cfg, out)
}

/// Featurizes and trains on generated data, as `riskgrid train` does on the written directory.
pub fn train_on(config: &Config, cfg: &SynthConfig, out: &SynthOutput) -> WccewsModel {
    let features = featurize(&out.grid, &out.poi_sets, cfg.features).expect("featurize");
    let (labels, _) = label_cells(&out.grid, &out.incidents, &cfg.taxonomy).expect("labels");
    let categories: Vec<String> = out.poi_sets.iter().map(|s| s.category.clone()).collect();
    let mut model = train_all(
        &out.grid,
        &features,
        &labels,
        &cfg.taxonomy,
        cfg.features,
        &categories,
        &config.train,
    )
    .expect("train");
    model.metadata.poi_fingerprint = Some(poi_fingerprint(&out.poi_sets));
    model
}

/// Small scenario written to `dir/data` with a model at `dir/model.bin`.
pub fn small_fixture(dir: &Path) -> (PathBuf, PathBuf, WccewsModel) {
    let config = small_config();
    let (cfg, out) = synth_of(&config);
    let data = dir.join("data");
    out.write_dir(&data).expect("write dataset");
    let model = train_on(&config, &cfg, &out);
    let path = dir.join("model.bin");
    model.save(&path).expect("save model");
    (data, path, model)
}

// ---- forest traversal oracle ----

/// Routes `x` down every tree by hand and averages the leaf distributions.
pub fn traversal_mean(forest: &RandomForest, x: &[f64]) -> Vec<f64> {
    let mut sum = vec![0.0; forest.n_classes()];
    for tree in forest.trees() {
        let nodes = tree.nodes();
        let mut i = 0;
        let dist = loop {
            match &nodes[i] {
                Node::Leaf { distribution } => break distribution,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        };
        for (s, p) in sum.iter_mut().zip(dist) {
            *s += p;
        }
    }
    sum.iter().map(|s| s / forest.trees().len() as f64).collect()
}

// ---- exhaustive split oracle ----

#[derive(Debug)]
pub enum OracleNode {
    Leaf(Vec<u64>),
    Split {
        feature: usize,
        /// Largest value sent left and smallest value sent right.
        lo: f64,
        hi: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

fn class_counts(rows: &[usize], y: &[usize], k: usize) -> Vec<u64> {
    let mut c = vec![0u64; k];
    for &r in rows {
        c[y[r]] += 1;
    }
    c
}

/// Weighted Gini impurity of a partition, in exact rationals.
fn weighted_gini(parts: &[&[u64]], n: u64) -> Ratio<i128> {
    let mut g = Ratio::from_integer(0i128);
    for counts in parts {
        let m: u64 = counts.iter().sum();
        let mut gini = Ratio::from_integer(1i128);
        for &c in counts.iter() {
            let p = Ratio::new(c as i128, m as i128);
            gini -= p * p;
        }
        g += Ratio::new(m as i128, n as i128) * gini;
    }
    g
}

/// Grows a tree by enumerating every (feature, distinct-value midpoint)
/// pair and taking the lowest weighted Gini; ties go to the lowest feature,
/// then the lowest threshold.
pub fn oracle_tree(x: &[Vec<f64>], y: &[usize], k: usize, max_depth: usize, min_leaf: usize) -> OracleNode {
    let rows: Vec<usize> = (0..x.len()).collect();
    oracle_grow(x, y, k, &rows, 0, max_depth, min_leaf)
}

fn oracle_grow(
    x: &[Vec<f64>],
    y: &[usize],
    k: usize,
    rows: &[usize],
    depth: usize,
    max_depth: usize,
    min_leaf: usize,
) -> OracleNode {
    let counts = class_counts(rows, y, k);
    let n = rows.len() as u64;
    if counts.iter().filter(|&&c| c > 0).count() <= 1 || depth >= max_depth || n < 2 * min_leaf as u64 {
        return OracleNode::Leaf(counts);
    }
    let d = x[0].len();
    let mut best: Option<(Ratio<i128>, usize, f64, f64)> = None;
    for f in 0..d {
        let mut values: Vec<f64> = rows.iter().map(|&r| x[r][f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] <= lo).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| x[r][f] >= hi).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            let g = weighted_gini(&[&class_counts(&left, y, k), &class_counts(&right, y, k)], n);
            if best.as_ref().is_none_or(|b| g < b.0) {
                best = Some((g, f, lo, hi));
            }
        }
    }
    match best {
        None => OracleNode::Leaf(counts),
        Some((_, feature, lo, hi)) => {
            let left: Vec<usize> = rows.iter().copied().filter(|&r| x[r][feature] <= lo).collect();
            let right: Vec<usize> = rows.iter().copied().filter(|&r| x[r][feature] >= hi).collect();
            OracleNode::Split {
                feature,
                lo,
                hi,
                left: Box::new(oracle_grow(x, y, k, &left, depth + 1, max_depth, min_leaf)),
                right: Box::new(oracle_grow(x, y, k, &right, depth + 1, max_depth, min_leaf)),
            }
        }
    }
}

/// Checks that `tree` makes the same split choices as the oracle.
pub fn compare_tree(tree: &DecisionTree, oracle: &OracleNode) -> Result<(), String> {
    compare_node(tree.nodes(), 0, oracle, "root")
}

fn compare_node(nodes: &[Node], i: usize, oracle: &OracleNode, path: &str) -> Result<(), String> {
    match (&nodes[i], oracle) {
        (Node::Leaf { distribution }, OracleNode::Leaf(counts)) => {
            let n: u64 = counts.iter().sum();
            let expect: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            if *distribution == expect {
                Ok(())
            } else {
                Err(format!("{path}: leaf {distribution:?} != {expect:?}"))
            }
        }
        (
            Node::Split { feature, threshold, left, right },
            OracleNode::Split { feature: of, lo, hi, left: ol, right: or },
        ) => {
            if feature != of {
                return Err(format!("{path}: feature {feature} != {of}"));
            }
            if !(*threshold >= *lo && *threshold < *hi) {
                return Err(format!("{path}: threshold {threshold} not in [{lo}, {hi})"));
            }
            compare_node(nodes, *left, ol, &format!("{path}.L"))?;
            compare_node(nodes, *right, or, &format!("{path}.R"))
        }
        (got, want) => Err(format!("{path}: node kind differs: {got:?} vs {want:?}")),
    }
}

/// Random classification instance: features mix small integers (many ties)
/// and continuous values.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let discrete: Vec<bool> = (0..d).map(|_| rng.random_bool(0.5)).collect();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            discrete
                .iter()
                .map(|&disc| if disc { rng.random_range(0..6) as f64 } else { rng.random_range(-10.0..10.0) })
                .collect()
        })
        .collect();
    let y: Vec<usize> = x
        .iter()
        .map(|r| {
            if rng.random_bool(0.3) {
                rng.random_range(0..k)
            } else {
                ((r[0] + 10.0) as usize) % k
            }
        })
        .collect();
    (x, y)
}
