//! Dimension lower bound for prepare-and-measure correlations.
//!
//! For any distribution `q` over preparations,
//!
//! ```text
//! D(p) >= 1 / sum_{x,x'} q_x q_x' A[x][x'],
//! A[x][x'] = min_y ( sum_b sqrt(p(b|x,y)) sqrt(p(b|x',y)) )^2,
//! ```
//!
//! where `A` is the fidelity matrix: squared worst-case Bhattacharyya
//! coefficients between preparations. The bound arises from the Bell
//! correlation `r(x,b|y) = q_x p(b|x,y)` built by [`pm_to_bell`].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BellCorrelation, PmCorrelation, SimplexWeights};

/// Slack used when rounding real-valued bounds up to integer dimensions.
pub const ROUND_EPS: f64 = 1e-9;

/// Denominators below this are treated as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-15;

/// `ceil(value - ROUND_EPS)`, never below 1.
pub fn ceil_dimension(value: f64) -> usize {
    ((value - ROUND_EPS).ceil().max(1.0)) as usize
}

/// Squared-Bhattacharyya matrix minimized over measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityMatrix {
    a: DMatrix<f64>,
    argmin_y: DMatrix<usize>,
}

impl FidelityMatrix {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Measurement attaining the minimum for the pair (smallest index on ties).
    pub fn argmin_y(&self, x: usize, x2: usize) -> usize {
        self.argmin_y[(x, x2)]
    }

    /// `q^T A q`.
    pub fn quadratic_form(&self, q: &[f64]) -> f64 {
        quadratic_form(&self.a, q)
    }
}

pub(crate) fn quadratic_form(a: &DMatrix<f64>, q: &[f64]) -> f64 {
    let n = a.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[(i, j)] * q[j];
        }
        total += q[i] * row;
    }
    total
}

fn sqrt_table(p: &PmCorrelation) -> Vec<f64> {
    p.as_slice().iter().map(|v| v.sqrt()).collect()
}

/// Build the fidelity matrix of `p`.
pub fn fidelity_matrix(p: &PmCorrelation) -> FidelityMatrix {
    let (n, m, k) = (p.n_preparations(), p.n_measurements(), p.n_outcomes());
    let roots = sqrt_table(p);
    let at = |x: usize, y: usize| &roots[(x * m + y) * k..(x * m + y + 1) * k];

    let rows: Vec<Vec<(f64, usize)>> = (0..n)
        .into_par_iter()
        .map(|x| {
            (0..n)
                .map(|x2| {
                    let (lo, hi) = if x <= x2 { (x, x2) } else { (x2, x) };
                    let mut best = (f64::INFINITY, 0);
                    for y in 0..m {
                        let bc: f64 = at(lo, y).iter().zip(at(hi, y)).map(|(u, v)| u * v).sum();
                        let f = bc * bc;
                        if f < best.0 {
                            best = (f, y);
                        }
                    }
                    (best.0.clamp(0.0, 1.0), best.1)
                })
                .collect()
        })
        .collect();

    FidelityMatrix {
        a: DMatrix::from_fn(n, n, |i, j| rows[i][j].0),
        argmin_y: DMatrix::from_fn(n, n, |i, j| rows[i][j].1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QSource {
    Uniform,
    User,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmBoundReport {
    pub q_used: SimplexWeights,
    pub raw_bound: f64,
    pub dimension_lb: usize,
    pub denominator: f64,
    pub trivial_ub: usize,
    pub q_source: QSource,
}

/// Evaluate the bound for a precomputed fidelity matrix.
pub fn pm_bound_with(
    fm: &FidelityMatrix,
    q: &SimplexWeights,
    q_source: QSource,
) -> Result<PmBoundReport> {
    let n = fm.n();
    if q.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "q has length {}, correlation has N={n}",
            q.len()
        )));
    }
    let denominator = fm.quadratic_form(q.as_slice());
    if !(denominator >= DENOMINATOR_FLOOR) {
        return Err(Error::DegenerateDenominator(denominator));
    }
    let raw_bound = 1.0 / denominator;
    debug_assert!(raw_bound <= n as f64 + 1e-9, "bound {raw_bound} exceeds N={n}");
    Ok(PmBoundReport {
        q_used: q.clone(),
        raw_bound,
        dimension_lb: ceil_dimension(raw_bound).min(n),
        denominator,
        trivial_ub: n,
        q_source,
    })
}

/// Lower bound on the dimension needed to produce `p`, for the given `q`.
pub fn pm_bound(p: &PmCorrelation, q: &SimplexWeights) -> Result<PmBoundReport> {
    pm_bound_with(&fidelity_matrix(p), q, QSource::User)
}

/// Lower bound with uniform `q`.
pub fn pm_bound_uniform(p: &PmCorrelation) -> Result<PmBoundReport> {
    let q = SimplexWeights::uniform(p.n_preparations());
    pm_bound_with(&fidelity_matrix(p), &q, QSource::Uniform)
}

/// Bell statistics of Alice measuring a classical register `sum_x q_x |x><x|`
/// and Bob measuring the paired PM state: `r(x,b|0,y) = q_x p(b|x,y)`.
///
/// Alice has one setting whose outcomes are the preparations.
pub fn pm_to_bell(p: &PmCorrelation, q: &SimplexWeights) -> Result<BellCorrelation> {
    let (n, m, k) = (p.n_preparations(), p.n_measurements(), p.n_outcomes());
    if q.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "q has length {}, correlation has N={n}",
            q.len()
        )));
    }
    let mut flat = Vec::with_capacity(m * n * k);
    for y in 0..m {
        for x in 0..n {
            for b in 0..k {
                flat.push(q[x] * p.prob(x, y, b));
            }
        }
    }
    BellCorrelation::new(1, m, n, k, flat, crate::model::DEFAULT_TOL)
}
