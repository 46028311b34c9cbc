//! CART classification trees with Gini impurity.
//!
//! Split search scans each candidate feature in presorted order. Candidate
//! thresholds are midpoints between consecutive distinct values, and a row
//! goes left when `x[feature] <= threshold`. Impurity comparisons are exact:
//! the weighted Gini of a split is minimized by maximizing
//! `sum_k L_k^2 / n_L + sum_k R_k^2 / n_R`, which is compared as a rational
//! number in integer arithmetic. Ties keep the lowest feature index, then the
//! lowest threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, LearnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        distribution: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn at each node.
    pub m_try: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    n_features: usize,
    n_classes: usize,
    /// Node 0 is the root.
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Depth of the deepest leaf; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub(crate) fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { distribution } => return distribution,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_features {
            return Err(LearnError::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        Ok(self.leaf(x).to_vec())
    }
}

/// Training matrix in column-major form with each column's row order
/// presorted by value (ties by row index). Shared by every tree of a forest.
pub(crate) struct Presorted {
    pub n_rows: usize,
    pub n_features: usize,
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &[Vec<f64>]) -> Self {
        let n_rows = x.len();
        let n_features = x.first().map_or(0, Vec::len);
        let columns: Vec<Vec<f64>> = (0..n_features).map(|j| x.iter().map(|r| r[j]).collect()).collect();
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..n_rows as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            n_rows,
            n_features,
            columns,
            order,
        }
    }
}

pub fn fit_tree<R: Rng + ?Sized>(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut R,
) -> Result<DecisionTree, LearnError> {
    let d = check_xy(x, y.len())?;
    check_params(params, d, n_classes, y)?;
    let data = Presorted::new(x);
    Ok(grow(&data, y, &vec![1; x.len()], n_classes, params, rng))
}

pub(crate) fn check_params(params: &TreeParams, d: usize, n_classes: usize, y: &[usize]) -> Result<(), LearnError> {
    if params.max_depth < 1 {
        return Err(LearnError::Params("max_depth must be >= 1".into()));
    }
    if params.min_leaf < 1 {
        return Err(LearnError::Params("min_leaf must be >= 1".into()));
    }
    if params.m_try < 1 || params.m_try > d {
        return Err(LearnError::Params(format!("m_try {} outside 1..={d}", params.m_try)));
    }
    if n_classes < 1 {
        return Err(LearnError::Params("need at least one class".into()));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(LearnError::Params(format!("label {bad} outside 0..{n_classes}")));
    }
    Ok(())
}

/// Grows one tree on the rows with nonzero `weights` (bootstrap multiplicities).
pub(crate) fn grow<R: Rng + ?Sized>(
    data: &Presorted,
    y: &[usize],
    weights: &[u32],
    n_classes: usize,
    params: &TreeParams,
    rng: &mut R,
) -> DecisionTree {
    let active = weights.iter().filter(|&&w| w > 0).count();
    let mut ord = Vec::with_capacity(active * data.n_features);
    for col in &data.order {
        let base = ord.len();
        ord.resize(base + active + 1, 0);
        let mut k = base;
        for &r in col {
            ord[k] = r;
            k += usize::from(weights[r as usize] > 0);
        }
        ord.truncate(base + active);
    }
    let mut builder = Builder {
        data,
        y,
        weights,
        n_classes,
        params,
        stride: active,
        ord,
        scratch: vec![0; active],
        goes_left: vec![false; data.n_rows],
        features: (0..data.n_features).collect(),
        nodes: Vec::new(),
    };
    builder.build(0, active, 0, rng);
    DecisionTree {
        n_features: data.n_features,
        n_classes,
        nodes: builder.nodes,
    }
}

struct Builder<'a> {
    data: &'a Presorted,
    y: &'a [usize],
    weights: &'a [u32],
    n_classes: usize,
    params: &'a TreeParams,
    stride: usize,
    /// Per-feature sorted active rows, feature `f` at `f * stride..`.
    ord: Vec<u32>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    features: Vec<usize>,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    /// Position in the node's sorted segment of the last row going left.
    pos: usize,
    num: u128,
    den: u128,
    score: f64,
}

/// Relative width of the band in which float split scores are rechecked exactly.
const SCORE_BAND: f64 = 1e-9;

impl Builder<'_> {
    fn segment(&self, f: usize, start: usize, end: usize) -> &[u32] {
        &self.ord[f * self.stride + start..f * self.stride + end]
    }

    fn build<R: Rng + ?Sized>(&mut self, start: usize, end: usize, depth: usize, rng: &mut R) -> usize {
        let mut counts = vec![0u64; self.n_classes];
        for &r in self.segment(0, start, end) {
            counts[self.y[r as usize]] += u64::from(self.weights[r as usize]);
        }
        let n: u64 = counts.iter().sum();
        let id = self.nodes.len();
        let leaf = Node::Leaf {
            distribution: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        };
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_leaf as u64 {
            self.nodes.push(leaf);
            return id;
        }
        let Some(best) = self.best_split(start, end, &counts, rng) else {
            self.nodes.push(leaf);
            return id;
        };

        let base = best.feature * self.stride;
        let col = &self.data.columns[best.feature];
        let (lo, hi) = (
            col[self.ord[base + start + best.pos] as usize],
            col[self.ord[base + start + best.pos + 1] as usize],
        );
        let threshold = midpoint(lo, hi);
        let n_left = best.pos + 1;
        for i in 0..end - start {
            let r = self.ord[base + start + i] as usize;
            self.goes_left[r] = i < n_left;
        }
        for f in 0..self.data.n_features {
            let base = f * self.stride;
            // Branchless stable partition; the right side goes through scratch.
            let (mut l, mut s) = (base + start, 0);
            for i in base + start..base + end {
                let r = self.ord[i];
                let g = usize::from(self.goes_left[r as usize]);
                self.ord[l] = r;
                self.scratch[s] = r;
                l += g;
                s += 1 - g;
            }
            self.ord[l..base + end].copy_from_slice(&self.scratch[..s]);
        }

        self.nodes.push(Node::Leaf { distribution: Vec::new() });
        let left = self.build(start, start + n_left, depth + 1, rng);
        let right = self.build(start + n_left, end, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn best_split<R: Rng + ?Sized>(&mut self, start: usize, end: usize, totals: &[u64], rng: &mut R) -> Option<BestSplit> {
        let d = self.features.len();
        let m = self.params.m_try;
        for i in 0..m {
            let j = rng.random_range(i..d);
            self.features.swap(i, j);
        }
        let mut candidates = self.features[..m].to_vec();
        candidates.sort_unstable();

        let n: u64 = totals.iter().sum();
        let min_leaf = self.params.min_leaf as u64;
        let total_sq: u64 = totals.iter().map(|c| c * c).sum();
        let mut best: Option<BestSplit> = None;
        let mut left = vec![0u64; self.n_classes];
        for &f in &candidates {
            let seg = self.segment(f, start, end);
            let col = &self.data.columns[f];
            left.iter_mut().for_each(|c| *c = 0);
            let (mut n_left, mut sq_left, mut sq_right) = (0u64, 0u64, total_sq);
            for pos in 0..seg.len() - 1 {
                let r = seg[pos] as usize;
                let (k, w) = (self.y[r], u64::from(self.weights[r]));
                let right_k = totals[k] - left[k];
                sq_left += 2 * left[k] * w + w * w;
                sq_right = sq_right + w * w - 2 * right_k * w;
                left[k] += w;
                n_left += w;
                let n_right = n - n_left;
                if col[r] == col[seg[pos + 1] as usize] || n_left < min_leaf || n_right < min_leaf {
                    continue;
                }
                // Float screen first; the exact integer comparison settles
                // anything within rounding distance of the incumbent.
                let score = sq_left as f64 / n_left as f64 + sq_right as f64 / n_right as f64;
                let better = match &best {
                    None => true,
                    Some(b) if score > b.score * (1.0 + SCORE_BAND) => true,
                    Some(b) if score < b.score * (1.0 - SCORE_BAND) => false,
                    Some(b) => {
                        let num = u128::from(sq_left) * u128::from(n_right) + u128::from(sq_right) * u128::from(n_left);
                        let den = u128::from(n_left) * u128::from(n_right);
                        num * b.den > b.num * den
                    }
                };
                if better {
                    best = Some(BestSplit {
                        feature: f,
                        pos,
                        num: u128::from(sq_left) * u128::from(n_right) + u128::from(sq_right) * u128::from(n_left),
                        den: u128::from(n_left) * u128::from(n_right),
                        score,
                    });
                }
            }
        }
        best
    }
}

/// Midpoint of `lo < hi`, never equal to `hi`.
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo / 2.0 + hi / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn params(d: usize) -> TreeParams {
        TreeParams {
            max_depth: 12,
            min_leaf: 1,
            m_try: d,
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0]];
        let t = fit_tree(&x, &[1, 1, 1], 2, &params(1), &mut stream_rng(0, 0)).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.nodes(), &[Node::Leaf { distribution: vec![0.0, 1.0] }]);
    }

    #[test]
    fn perfect_split_threshold() {
        let x = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        let t = fit_tree(&x, &[0, 0, 1, 1], 2, &params(1), &mut stream_rng(0, 0)).unwrap();
        match &t.nodes()[0] {
            Node::Split { feature, threshold, .. } => assert_eq!((*feature, *threshold), (0, 2.5)),
            n => panic!("root is {n:?}"),
        }
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn respects_depth_and_min_leaf() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let p = TreeParams {
            max_depth: 3,
            min_leaf: 4,
            m_try: 1,
        };
        let t = fit_tree(&x, &y, 2, &p, &mut stream_rng(0, 0)).unwrap();
        assert!(t.depth() <= 3);
        for node in t.nodes() {
            if let Node::Leaf { distribution } = node {
                assert!((distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_features_make_a_leaf() {
        let x = vec![vec![1.0, 5.0]; 6];
        let t = fit_tree(&x, &[0, 1, 0, 1, 0, 1], 2, &params(2), &mut stream_rng(0, 0)).unwrap();
        assert_eq!(t.nodes(), &[Node::Leaf { distribution: vec![0.5, 0.5] }]);
    }

    #[test]
    fn input_validation() {
        let mut rng = stream_rng(0, 0);
        assert!(matches!(fit_tree(&[], &[], 2, &params(1), &mut rng), Err(LearnError::Empty)));
        let x = vec![vec![1.0]];
        assert!(fit_tree(&x, &[0, 1], 2, &params(1), &mut rng).is_err());
        assert!(fit_tree(&x, &[2], 2, &params(1), &mut rng).is_err());
        assert!(fit_tree(&x, &[0], 2, &params(2), &mut rng).is_err());
        assert!(fit_tree(&[vec![f64::NAN]], &[0], 2, &params(1), &mut rng).is_err());
        let t = fit_tree(&x, &[0], 2, &params(1), &mut rng).unwrap();
        assert!(matches!(t.predict_proba(&[1.0, 2.0]), Err(LearnError::Dimension { .. })));
    }

    #[test]
    fn midpoint_never_reaches_upper_value() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert_eq!(midpoint(lo, hi), lo);
        assert_eq!(midpoint(2.0, 3.0), 2.5);
    }
}
