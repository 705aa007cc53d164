//! Correlation data types.
//!
//! A prepare-and-measure (PM) correlation is the table `p(b|x,y)` of outcome
//! probabilities for preparation `x`, measurement `y` and outcome `b`. A Bell
//! correlation is the joint table `r(a,b|x,y)` for two parties. Both are
//! validated on construction and immutable afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Default tolerance for normalization and negativity checks.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Optional human-readable names for the preparation, measurement and outcome indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<String>>,
}

/// Clamp entries in `[-tol, 0)` to zero and collect entries below `-tol`.
///
/// `slice_len` is the number of entries per normalized slice; the returned
/// violations carry `(x, y, b)` coordinates computed from `inner` (the number of
/// second-level settings).
fn clamp_and_check(
    probs: &mut [f64],
    inner: usize,
    slice_len: usize,
    tol: f64,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (slice_idx, slice) in probs.chunks_mut(slice_len).enumerate() {
        let (x, y) = (slice_idx / inner, slice_idx % inner);
        let mut negative = false;
        for (b, v) in slice.iter_mut().enumerate() {
            if !v.is_finite() || *v < -tol {
                violations.push(Violation::NegativeProbability { x, y, b, value: *v });
                negative = true;
            } else if *v < 0.0 {
                *v = 0.0;
            }
        }
        if negative {
            continue;
        }
        let sum: f64 = slice.iter().sum();
        if (sum - 1.0).abs() > tol {
            violations.push(Violation::Normalization { x, y, sum });
        }
    }
    violations
}

/// Conditional probabilities `p(b|x,y)` stored densely in `[x][y][b]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct PmCorrelation {
    n: usize,
    m: usize,
    k: usize,
    probs: Vec<f64>,
    labels: Option<Labels>,
}

impl PmCorrelation {
    /// Validate a flat `[x][y][b]` tensor.
    ///
    /// Tiny negatives in `[-tol, 0)` are clamped to zero before the
    /// normalization check. Every violated slice is reported.
    pub fn new(n: usize, m: usize, k: usize, probs: Vec<f64>, tol: f64) -> Result<Self> {
        if n == 0 || m == 0 || k == 0 {
            return Err(Error::ShapeMismatch(format!(
                "dimensions must be positive, got N={n}, M={m}, K={k}"
            )));
        }
        if probs.len() != n * m * k {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for N={n}, M={m}, K={k}, got {}",
                n * m * k,
                probs.len()
            )));
        }
        let mut probs = probs;
        let violations = clamp_and_check(&mut probs, m, k, tol);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(Self {
            n,
            m,
            k,
            probs,
            labels: None,
        })
    }

    /// Validate a nested `[x][y][b]` tensor against declared dimensions.
    pub fn from_nested(
        n: usize,
        m: usize,
        k: usize,
        nested: &[Vec<Vec<f64>>],
        tol: f64,
    ) -> Result<Self> {
        if nested.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "p has {} preparations, declared N={n}",
                nested.len()
            )));
        }
        let mut flat = Vec::with_capacity(n * m * k);
        for (x, row) in nested.iter().enumerate() {
            if row.len() != m {
                return Err(Error::ShapeMismatch(format!(
                    "p[{x}] has {} measurements, declared M={m}",
                    row.len()
                )));
            }
            for (y, dist) in row.iter().enumerate() {
                if dist.len() != k {
                    return Err(Error::ShapeMismatch(format!(
                        "p[{x}][{y}] has {} outcomes, declared K={k}",
                        dist.len()
                    )));
                }
                flat.extend_from_slice(dist);
            }
        }
        Self::new(n, m, k, flat, tol)
    }

    /// Build from a closure evaluated at every `(x, y, b)`.
    pub fn from_fn(
        n: usize,
        m: usize,
        k: usize,
        tol: f64,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut flat = Vec::with_capacity(n * m * k);
        for x in 0..n {
            for y in 0..m {
                for b in 0..k {
                    flat.push(f(x, y, b));
                }
            }
        }
        Self::new(n, m, k, flat, tol)
    }

    pub fn with_labels(mut self, labels: Option<Labels>) -> Self {
        self.labels = labels;
        self
    }

    /// Number of preparations `N`.
    pub fn n_preparations(&self) -> usize {
        self.n
    }

    /// Number of measurements `M`.
    pub fn n_measurements(&self) -> usize {
        self.m
    }

    /// Number of outcomes `K`.
    pub fn n_outcomes(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }

    /// `p(b|x,y)`.
    #[inline]
    pub fn prob(&self, x: usize, y: usize, b: usize) -> f64 {
        self.probs[(x * self.m + y) * self.k + b]
    }

    /// The outcome distribution `p(.|x,y)`.
    #[inline]
    pub fn distribution(&self, x: usize, y: usize) -> &[f64] {
        let start = (x * self.m + y) * self.k;
        &self.probs[start..start + self.k]
    }

    /// Flat `[x][y][b]` view.
    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n)
            .map(|x| (0..self.m).map(|y| self.distribution(x, y).to_vec()).collect())
            .collect()
    }

    /// Re-run validation on the stored data (idempotent for valid data).
    pub fn revalidate(&self, tol: f64) -> Result<Self> {
        Self::new(self.n, self.m, self.k, self.probs.clone(), tol)
            .map(|p| p.with_labels(self.labels.clone()))
    }

    /// Copy with measurement `y` removed. Returns `None` when `M = 1`.
    pub fn without_measurement(&self, y_removed: usize) -> Option<Self> {
        if self.m <= 1 || y_removed >= self.m {
            return None;
        }
        let mut flat = Vec::with_capacity(self.n * (self.m - 1) * self.k);
        for x in 0..self.n {
            for y in (0..self.m).filter(|&y| y != y_removed) {
                flat.extend_from_slice(self.distribution(x, y));
            }
        }
        Some(Self {
            n: self.n,
            m: self.m - 1,
            k: self.k,
            probs: flat,
            labels: None,
        })
    }
}

/// Joint probabilities `r(a,b|x,y)` stored densely in `[x][y][a][b]` order.
///
/// No-signaling is not required; see [`BellCorrelation::max_signaling`].
#[derive(Debug, Clone, PartialEq)]
pub struct BellCorrelation {
    settings_a: usize,
    settings_b: usize,
    outcomes_a: usize,
    outcomes_b: usize,
    probs: Vec<f64>,
}

impl BellCorrelation {
    pub fn new(
        settings_a: usize,
        settings_b: usize,
        outcomes_a: usize,
        outcomes_b: usize,
        probs: Vec<f64>,
        tol: f64,
    ) -> Result<Self> {
        let dims = [settings_a, settings_b, outcomes_a, outcomes_b];
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "dimensions must be positive, got XA={settings_a}, YB={settings_b}, A={outcomes_a}, B={outcomes_b}"
            )));
        }
        let expected = dims.iter().product::<usize>();
        if probs.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "expected {expected} entries, got {}",
                probs.len()
            )));
        }
        let mut probs = probs;
        let violations = clamp_and_check(&mut probs, settings_b, outcomes_a * outcomes_b, tol);
        if !violations.is_empty() {
            return Err(Error::Invalid(violations));
        }
        Ok(Self {
            settings_a,
            settings_b,
            outcomes_a,
            outcomes_b,
            probs,
        })
    }

    pub fn from_nested(
        settings_a: usize,
        settings_b: usize,
        outcomes_a: usize,
        outcomes_b: usize,
        nested: &[Vec<Vec<Vec<f64>>>],
        tol: f64,
    ) -> Result<Self> {
        let mut flat = Vec::with_capacity(settings_a * settings_b * outcomes_a * outcomes_b);
        if nested.len() != settings_a {
            return Err(Error::ShapeMismatch(format!(
                "r has {} Alice settings, declared XA={settings_a}",
                nested.len()
            )));
        }
        for (x, per_x) in nested.iter().enumerate() {
            if per_x.len() != settings_b {
                return Err(Error::ShapeMismatch(format!(
                    "r[{x}] has {} Bob settings, declared YB={settings_b}",
                    per_x.len()
                )));
            }
            for (y, per_y) in per_x.iter().enumerate() {
                if per_y.len() != outcomes_a {
                    return Err(Error::ShapeMismatch(format!(
                        "r[{x}][{y}] has {} Alice outcomes, declared A={outcomes_a}",
                        per_y.len()
                    )));
                }
                for (a, row) in per_y.iter().enumerate() {
                    if row.len() != outcomes_b {
                        return Err(Error::ShapeMismatch(format!(
                            "r[{x}][{y}][{a}] has {} Bob outcomes, declared B={outcomes_b}",
                            row.len()
                        )));
                    }
                    flat.extend_from_slice(row);
                }
            }
        }
        Self::new(settings_a, settings_b, outcomes_a, outcomes_b, flat, tol)
    }

    pub fn n_settings_a(&self) -> usize {
        self.settings_a
    }

    pub fn n_settings_b(&self) -> usize {
        self.settings_b
    }

    pub fn n_outcomes_a(&self) -> usize {
        self.outcomes_a
    }

    pub fn n_outcomes_b(&self) -> usize {
        self.outcomes_b
    }

    /// `r(a,b|x,y)`.
    #[inline]
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.probs[((x * self.settings_b + y) * self.outcomes_a + a) * self.outcomes_b + b]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<Vec<f64>>>> {
        (0..self.settings_a)
            .map(|x| {
                (0..self.settings_b)
                    .map(|y| {
                        (0..self.outcomes_a)
                            .map(|a| (0..self.outcomes_b).map(|b| self.prob(x, y, a, b)).collect())
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// The same data with the parties exchanged: `r'(b,a|y,x) = r(a,b|x,y)`.
    pub fn swap_parties(&self) -> Self {
        let (xa, yb, a_n, b_n) = (self.settings_a, self.settings_b, self.outcomes_a, self.outcomes_b);
        let mut flat = Vec::with_capacity(self.probs.len());
        for y in 0..yb {
            for x in 0..xa {
                for b in 0..b_n {
                    for a in 0..a_n {
                        flat.push(self.prob(x, y, a, b));
                    }
                }
            }
        }
        Self {
            settings_a: yb,
            settings_b: xa,
            outcomes_a: b_n,
            outcomes_b: a_n,
            probs: flat,
        }
    }

    /// Largest deviation from no-signaling: how much either party's marginal
    /// depends on the other party's setting. Advisory only.
    pub fn max_signaling(&self) -> f64 {
        let mut worst = 0.0f64;
        let marg_a = |x: usize, y: usize, a: usize| -> f64 {
            (0..self.outcomes_b).map(|b| self.prob(x, y, a, b)).sum()
        };
        let marg_b = |x: usize, y: usize, b: usize| -> f64 {
            (0..self.outcomes_a).map(|a| self.prob(x, y, a, b)).sum()
        };
        for x in 0..self.settings_a {
            for a in 0..self.outcomes_a {
                let base = marg_a(x, 0, a);
                for y in 1..self.settings_b {
                    worst = worst.max((marg_a(x, y, a) - base).abs());
                }
            }
        }
        for y in 0..self.settings_b {
            for b in 0..self.outcomes_b {
                let base = marg_b(0, y, b);
                for x in 1..self.settings_a {
                    worst = worst.max((marg_b(x, y, b) - base).abs());
                }
            }
        }
        worst
    }
}

/// A probability vector over preparations.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>, tol: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::ShapeMismatch("weights must be nonempty".into()));
        }
        let mut weights = weights;
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < -tol {
                return Err(Error::OutOfRange(format!("weight {i} is {w}")));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::OutOfRange(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn point_mass(n: usize, at: usize) -> Self {
        let mut w = vec![0.0; n];
        w[at] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for SimplexWeights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_scenario_is_valid() {
        let p = PmCorrelation::new(1, 1, 1, vec![1.0], DEFAULT_TOL).unwrap();
        assert_eq!(p.prob(0, 0, 0), 1.0);
    }

    #[test]
    fn normalization_error_reports_sum() {
        let err = PmCorrelation::new(1, 1, 2, vec![0.6, 0.5], DEFAULT_TOL).unwrap_err();
        match err {
            Error::Invalid(v) => {
                assert_eq!(v.len(), 1);
                match v[0] {
                    Violation::Normalization { x: 0, y: 0, sum } => {
                        assert!((sum - 1.1).abs() < 1e-12)
                    }
                    ref other => panic!("unexpected {other:?}"),
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_bad_slice_is_listed() {
        let err = PmCorrelation::new(2, 2, 2, vec![0.5, 0.4, 1.0, 0.0, -0.2, 1.2, 0.3, 0.3], 1e-9)
            .unwrap_err();
        let Error::Invalid(v) = err else { panic!() };
        assert_eq!(v.len(), 3);
        assert!(matches!(v[1], Violation::NegativeProbability { x: 1, y: 0, b: 0, .. }));
    }

    #[test]
    fn tiny_negatives_are_clamped() {
        let p = PmCorrelation::new(1, 1, 2, vec![-1e-12, 1.0], 1e-9).unwrap();
        assert_eq!(p.prob(0, 0, 0), 0.0);
        let err = PmCorrelation::new(1, 1, 2, vec![-1e-6, 1.0 + 1e-6], 1e-9).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)));
    }

    #[test]
    fn zero_dimension_is_shape_mismatch() {
        assert!(matches!(
            PmCorrelation::new(0, 1, 1, vec![], 1e-9),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            PmCorrelation::new(1, 1, 2, vec![1.0], 1e-9),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn validation_is_idempotent() {
        let p = PmCorrelation::new(2, 1, 2, vec![0.3, 0.7, -1e-12, 1.0], 1e-9).unwrap();
        assert_eq!(p.revalidate(1e-9).unwrap(), p);
    }

    #[test]
    fn bell_examples() {
        let diag = vec![0.5, 0.0, 0.0, 0.5];
        assert!(BellCorrelation::new(1, 1, 2, 2, diag, 1e-9).is_ok());
        assert!(BellCorrelation::new(1, 1, 2, 2, vec![0.25; 4], 1e-9).is_ok());
        let err = BellCorrelation::new(1, 1, 2, 2, vec![0.3, 0.2, 0.2, 0.2], 1e-9).unwrap_err();
        let Error::Invalid(v) = err else { panic!() };
        assert!(matches!(v[0], Violation::Normalization { sum, .. } if (sum - 0.9).abs() < 1e-12));
    }

    #[test]
    fn swap_parties_round_trips() {
        let probs: Vec<f64> = (0..2 * 3 * 2 * 2)
            .map(|i| [0.1, 0.2, 0.3, 0.4][i % 4])
            .collect();
        let r = BellCorrelation::new(2, 3, 2, 2, probs, 1e-9).unwrap();
        let s = r.swap_parties();
        assert_eq!(s.n_settings_a(), 3);
        assert_eq!(s.prob(2, 1, 0, 1), r.prob(1, 2, 1, 0));
        assert_eq!(s.swap_parties(), r);
    }

    #[test]
    fn signaling_detected() {
        // Bob's marginal depends on Alice's setting.
        let probs = vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let r = BellCorrelation::new(2, 1, 2, 2, probs, 1e-9).unwrap();
        assert!((r.max_signaling() - 1.0).abs() < 1e-12);
        let product = BellCorrelation::new(1, 1, 2, 2, vec![0.25; 4], 1e-9).unwrap();
        assert_eq!(product.max_signaling(), 0.0);
    }

    #[test]
    fn simplex_weights_validation() {
        assert!(SimplexWeights::new(vec![0.5, 0.5], 1e-9).is_ok());
        assert!(SimplexWeights::new(vec![0.5, 0.6], 1e-9).is_err());
        assert!(SimplexWeights::new(vec![1.5, -0.5], 1e-9).is_err());
        assert!(SimplexWeights::new(vec![], 1e-9).is_err());
        assert_eq!(SimplexWeights::point_mass(3, 1).as_slice(), &[0.0, 1.0, 0.0]);
    }
}
