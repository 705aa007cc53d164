//! Named correlation families and the trivial classical realization.
//!
//! Bit convention: preparations of the `m`-bit families are indexed by the
//! integer value of the bit string, and measurement `y` (0-based) reads bit `y`
//! counting from the most significant end. For `m = 2`, `x = 2*x_1 + x_2`,
//! `y = 0` reads `x_1` and `y = 1` reads `x_2`.

use nalgebra::{Complex, DMatrix};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{PmCorrelation, SimplexWeights};
use crate::realization::Realization;

/// Largest number of bits accepted by the bit-string families.
pub const MAX_BITS: usize = 20;

/// Bit `y` of the `m`-bit string `x`, counting from the most significant bit.
#[inline]
pub fn bit(x: usize, y: usize, m: usize) -> usize {
    (x >> (m - 1 - y)) & 1
}

fn check_bits(m: usize) -> Result<()> {
    if !(1..=MAX_BITS).contains(&m) {
        return Err(Error::OutOfRange(format!("m must be in 1..={MAX_BITS}, got {m}")));
    }
    Ok(())
}

/// Perfect bit-retrieval correlation `p(b|x,y) = [b == x_y]`.
pub fn gen_toy(m: usize) -> Result<PmCorrelation> {
    check_bits(m)?;
    PmCorrelation::from_fn(1 << m, m, 2, 0.0, |x, y, b| {
        if b == bit(x, y, m) {
            1.0
        } else {
            0.0
        }
    })
}

/// Random access code statistics: bit `y` is decoded correctly with probability `beta`.
pub fn gen_rac(m: usize, beta: f64) -> Result<PmCorrelation> {
    check_bits(m)?;
    if !(0.5..=1.0).contains(&beta) {
        return Err(Error::OutOfRange(format!("beta must be in [1/2, 1], got {beta}")));
    }
    // 1 - beta is exact for beta in [1/2, 1], so every slice sums to exactly 1.
    let miss = 1.0 - beta;
    PmCorrelation::from_fn(1 << m, m, 2, 0.0, |x, y, b| {
        if b == bit(x, y, m) {
            beta
        } else {
            miss
        }
    })
}

/// Success probability of the optimal two-bit qubit code, `cos^2(pi/8)`.
pub fn rac2_beta() -> f64 {
    (std::f64::consts::PI / 8.0).cos().powi(2)
}

/// Success probability of the optimal three-bit qubit code, `1/2 + 1/(2 sqrt 3)`.
pub fn rac3_beta() -> f64 {
    0.5 + 0.5 / 3f64.sqrt()
}

/// The two qubit-realizable correlations whose even mixture needs a qutrit.
///
/// Preparations are `x = 2*x_1 + x_2`, measurements `y in {0, 1}` stand for
/// "ask for bit 1" / "ask for bit 2", and outcome 2 means "not this bit".
pub fn gen_nonconvexity_pair() -> (PmCorrelation, PmCorrelation) {
    let build = |i: usize| {
        PmCorrelation::from_fn(4, 2, 3, 0.0, |x, y, b| {
            let target = if y == i { bit(x, i, 2) } else { 2 };
            if b == target {
                1.0
            } else {
                0.0
            }
        })
        .expect("nonconvexity family is normalized")
    };
    (build(0), build(1))
}

/// Entrywise convex combination of correlations with identical shapes.
pub fn mix(ps: &[PmCorrelation], weights: &SimplexWeights) -> Result<PmCorrelation> {
    let first = ps
        .first()
        .ok_or_else(|| Error::ShapeMismatch("mix needs at least one correlation".into()))?;
    if ps.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} correlations but {} weights",
            ps.len(),
            weights.len()
        )));
    }
    let shape = |p: &PmCorrelation| (p.n_preparations(), p.n_measurements(), p.n_outcomes());
    if let Some(bad) = ps.iter().find(|p| shape(p) != shape(first)) {
        return Err(Error::ShapeMismatch(format!(
            "cannot mix {:?} with {:?}",
            shape(first),
            shape(bad)
        )));
    }
    let mut flat = vec![0.0; first.as_slice().len()];
    for (p, &w) in ps.iter().zip(weights.as_slice()) {
        for (acc, v) in flat.iter_mut().zip(p.as_slice()) {
            *acc += w * v;
        }
    }
    let (n, m, k) = shape(first);
    // Renormalization dust from arbitrary weights stays within the default tolerance.
    PmCorrelation::new(n, m, k, flat, crate::model::DEFAULT_TOL)
}

/// Diagonal realization in dimension `N`: `rho_x = |x><x|`,
/// `Pi_b^y = sum_z p(b|z,y) |z><z|`.
pub fn classical_realization(p: &PmCorrelation) -> Realization {
    let n = p.n_preparations();
    let states = (0..n)
        .map(|x| {
            let mut rho = DMatrix::zeros(n, n);
            rho[(x, x)] = Complex::new(1.0, 0.0);
            rho
        })
        .collect();
    let povms = (0..p.n_measurements())
        .map(|y| {
            (0..p.n_outcomes())
                .map(|b| {
                    DMatrix::from_fn(n, n, |i, j| {
                        if i == j {
                            Complex::new(p.prob(i, y, b), 0.0)
                        } else {
                            Complex::new(0.0, 0.0)
                        }
                    })
                })
                .collect()
        })
        .collect();
    Realization::new(n, states, povms)
}

/// Random PM correlation with each `p(.|x,y)` drawn from a symmetric
/// Dirichlet distribution. Test infrastructure.
///
/// With probability `zero_prob` an entry is forced to zero before
/// normalization (at least one entry per slice survives), which exercises
/// disjoint supports.
pub fn random_pm<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    m: usize,
    k: usize,
    concentration: f64,
    zero_prob: f64,
) -> PmCorrelation {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut flat = Vec::with_capacity(n * m * k);
    for _ in 0..n * m {
        let keep = rng.gen_range(0..k);
        let mut slice: Vec<f64> = (0..k)
            .map(|b| {
                let g: f64 = gamma.sample(rng);
                if b != keep && rng.gen::<f64>() < zero_prob {
                    0.0
                } else {
                    g.max(1e-300)
                }
            })
            .collect();
        let sum: f64 = slice.iter().sum();
        slice.iter_mut().for_each(|v| *v /= sum);
        flat.extend(slice);
    }
    PmCorrelation::new(n, m, k, flat, 1e-9).expect("normalized by construction")
}

/// Random point of the simplex, uniform (flat Dirichlet). Test infrastructure.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SimplexWeights {
    let exp = rand_distr::Exp1;
    let raw: Vec<f64> = (0..n).map(|_| exp.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    SimplexWeights::new(raw.into_iter().map(|v| v / sum).collect(), 1e-9).expect("normalized")
}
