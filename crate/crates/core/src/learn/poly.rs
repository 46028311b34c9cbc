use serde::{Deserialize, Serialize};

use super::LearnError;

/// All monomials of total degree `1..=degree` over `n_inputs` variables in
/// graded lexicographic order. The constant term is excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolynomialExpansion {
    n_inputs: usize,
    degree: usize,
    /// Each term as a non-decreasing list of input indices.
    terms: Vec<Vec<usize>>,
}

/// `C(d + degree, degree) - 1`.
pub fn expanded_len(d: usize, degree: usize) -> usize {
    let mut c: u128 = 1;
    for i in 1..=degree as u128 {
        c = c * (d as u128 + i) / i;
    }
    (c - 1) as usize
}

impl PolynomialExpansion {
    pub fn new(n_inputs: usize, degree: usize) -> Result<Self, LearnError> {
        if degree < 1 {
            return Err(LearnError::Params("polynomial degree must be >= 1".into()));
        }
        let mut terms = Vec::with_capacity(expanded_len(n_inputs, degree));
        let mut current = Vec::with_capacity(degree);
        for deg in 1..=degree {
            push_terms(n_inputs, deg, 0, &mut current, &mut terms);
        }
        Ok(Self {
            n_inputs,
            degree,
            terms,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    pub fn expand(&self, x: &[f64]) -> Result<Vec<f64>, LearnError> {
        if x.len() != self.n_inputs {
            return Err(LearnError::Dimension {
                expected: self.n_inputs,
                got: x.len(),
            });
        }
        Ok(self
            .terms
            .iter()
            .map(|t| t.iter().map(|&i| x[i]).product())
            .collect())
    }
}

fn push_terms(d: usize, remaining: usize, from: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if remaining == 0 {
        out.push(current.clone());
        return;
    }
    for i in from..d {
        current.push(i);
        push_terms(d, remaining - 1, i, current, out);
        current.pop();
    }
}

pub fn polynomial_features(x: &[f64], degree: usize) -> Result<Vec<f64>, LearnError> {
    PolynomialExpansion::new(x.len(), degree)?.expand(x)
}
