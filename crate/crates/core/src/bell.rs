//! Dimension lower bounds for Bell correlations.
//!
//! Both local dimensions of a state producing `r(a,b|x,y)` are at least
//!
//! ```text
//! eq1 = max_{y,y'} ( sum_{b,b'} min_x ( sum_a sqrt r(a,b|x,y) sqrt r(a,b'|x,y') )^2 )^-1
//! eq2 = max_{x,x'} ( sum_{a,a'} min_y ( sum_b sqrt r(a,b|x,y) sqrt r(a',b|x',y) )^2 )^-1
//! ```
//!
//! `eq2` is `eq1` with the parties exchanged.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::BellCorrelation;
use crate::pm_bound::{ceil_dimension, DENOMINATOR_FLOOR};

/// A bound that may be infinite when a denominator vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum BoundValue {
    Finite(f64),
    Unbounded,
}

impl BoundValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            BoundValue::Finite(v) => Some(v),
            BoundValue::Unbounded => None,
        }
    }

    fn rank(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BellBoundKind {
    Eq1,
    Eq2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ArgmaxSettings {
    pub bound: BellBoundKind,
    /// `(y, y')` for eq1, `(x, x')` for eq2.
    pub pair: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BellBoundReport {
    pub bound_eq1: BoundValue,
    pub bound_eq2: BoundValue,
    pub best: BoundValue,
    /// `None` when the best bound is unbounded.
    pub best_integer: Option<usize>,
    pub argmax_settings: ArgmaxSettings,
    /// Advisory: largest marginal dependence on the remote setting.
    pub max_signaling: f64,
}

/// Index view used to evaluate eq1 either directly or with the parties exchanged.
struct View<'a> {
    roots: Vec<f64>,
    r: &'a BellCorrelation,
    swapped: bool,
}

impl<'a> View<'a> {
    fn new(r: &'a BellCorrelation, swapped: bool) -> Self {
        Self {
            roots: r.as_slice().iter().map(|v| v.sqrt()).collect(),
            r,
            swapped,
        }
    }

    /// (settings of the "min" party, settings of the "max" party, outcomes of each)
    fn dims(&self) -> (usize, usize, usize, usize) {
        let r = self.r;
        if self.swapped {
            (r.n_settings_b(), r.n_settings_a(), r.n_outcomes_b(), r.n_outcomes_a())
        } else {
            (r.n_settings_a(), r.n_settings_b(), r.n_outcomes_a(), r.n_outcomes_b())
        }
    }

    /// `sqrt r(a,b|x,y)` in the view's orientation.
    #[inline]
    fn root(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        let r = self.r;
        let (x, y, a, b) = if self.swapped { (y, x, b, a) } else { (x, y, a, b) };
        self.roots[((x * r.n_settings_b() + y) * r.n_outcomes_a() + a) * r.n_outcomes_b() + b]
    }

    /// Denominator of eq1 for the setting pair `(y, y2)`.
    fn denominator(&self, y: usize, y2: usize) -> f64 {
        let (xs, _, a_n, b_n) = self.dims();
        let mut total = 0.0;
        for b in 0..b_n {
            for b2 in 0..b_n {
                let mut best = f64::INFINITY;
                for x in 0..xs {
                    let s: f64 = (0..a_n).map(|a| self.root(x, y, a, b) * self.root(x, y2, a, b2)).sum();
                    best = best.min(s * s);
                }
                total += best;
            }
        }
        total
    }

    /// Maximize over setting pairs; ties keep the lowest index pair.
    fn maximize(&self) -> Result<(BoundValue, (usize, usize))> {
        let (_, ys, _, _) = self.dims();
        let mut best: Option<(BoundValue, (usize, usize))> = None;
        let mut smallest = f64::INFINITY;
        let mut any_finite = false;
        for y in 0..ys {
            for y2 in 0..ys {
                let d = self.denominator(y, y2);
                smallest = smallest.min(d);
                let value = if d < DENOMINATOR_FLOOR {
                    BoundValue::Unbounded
                } else {
                    any_finite = true;
                    BoundValue::Finite(1.0 / d)
                };
                if best.map_or(true, |(b, _)| value.rank() > b.rank()) {
                    best = Some((value, (y, y2)));
                }
            }
        }
        if !any_finite {
            return Err(Error::DegenerateDenominator(smallest));
        }
        Ok(best.expect("at least one setting pair"))
    }
}

fn eq1_with_arg(r: &BellCorrelation) -> Result<(BoundValue, (usize, usize))> {
    View::new(r, false).maximize()
}

fn eq2_with_arg(r: &BellCorrelation) -> Result<(BoundValue, (usize, usize))> {
    View::new(r, true).maximize()
}

/// The bound maximized over Bob's setting pairs.
pub fn bell_bound_eq1(r: &BellCorrelation) -> Result<BoundValue> {
    eq1_with_arg(r).map(|(v, _)| v)
}

/// The bound maximized over Alice's setting pairs.
pub fn bell_bound_eq2(r: &BellCorrelation) -> Result<BoundValue> {
    eq2_with_arg(r).map(|(v, _)| v)
}

/// Both bounds with the winning setting pair.
pub fn bell_bound(r: &BellCorrelation) -> Result<BellBoundReport> {
    let (eq1, arg1) = eq1_with_arg(r)?;
    let (eq2, arg2) = eq2_with_arg(r)?;
    let (best, argmax_settings) = if eq2.rank() > eq1.rank() {
        (eq2, ArgmaxSettings { bound: BellBoundKind::Eq2, pair: arg2 })
    } else {
        (eq1, ArgmaxSettings { bound: BellBoundKind::Eq1, pair: arg1 })
    };
    Ok(BellBoundReport {
        bound_eq1: eq1,
        bound_eq2: eq2,
        best,
        best_integer: best.finite().map(ceil_dimension),
        argmax_settings,
        max_signaling: r.max_signaling(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_rac, gen_toy, rac2_beta};
    use crate::model::SimplexWeights;
    use crate::pm_bound::pm_to_bell;

    fn single(probs: Vec<f64>) -> BellCorrelation {
        BellCorrelation::new(1, 1, 2, 2, probs, 1e-9).unwrap()
    }

    fn value(v: BoundValue) -> f64 {
        v.finite().expect("finite bound")
    }

    #[test]
    fn perfectly_correlated_bit() {
        let r = single(vec![0.5, 0.0, 0.0, 0.5]);
        assert!((value(bell_bound_eq1(&r).unwrap()) - 2.0).abs() < 1e-12);
        assert!((value(bell_bound_eq2(&r).unwrap()) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn product_correlation() {
        let r = single(vec![0.25; 4]);
        assert!((value(bell_bound_eq1(&r).unwrap()) - 1.0).abs() < 1e-12);
        assert!((value(bell_bound_eq2(&r).unwrap()) - 1.0).abs() < 1e-12);
        let rep = bell_bound(&r).unwrap();
        assert_eq!(rep.best_integer, Some(1));
        assert_eq!(rep.argmax_settings.bound, BellBoundKind::Eq1);
    }

    #[test]
    fn transformed_toy_eq1_is_four() {
        let r = pm_to_bell(&gen_toy(2).unwrap(), &SimplexWeights::uniform(4)).unwrap();
        assert!((value(bell_bound_eq1(&r).unwrap()) - 4.0).abs() < 1e-9);
        let rep = bell_bound(&r).unwrap();
        // y != y' pairs reach 4 first at (0, 1).
        assert_eq!(rep.argmax_settings.pair, (0, 1));
        assert_eq!(rep.best_integer, Some(4));
    }

    #[test]
    fn transformed_rac2_eq2() {
        let r = pm_to_bell(&gen_rac(2, rac2_beta()).unwrap(), &SimplexWeights::uniform(4)).unwrap();
        assert!((value(bell_bound_eq2(&r).unwrap()) - 1.6).abs() < 1e-9);
    }

    #[test]
    fn swapping_parties_swaps_bounds() {
        let r = pm_to_bell(&gen_rac(2, 0.77).unwrap(), &SimplexWeights::uniform(4)).unwrap();
        let s = r.swap_parties();
        assert_eq!(bell_bound_eq1(&r).unwrap(), bell_bound_eq2(&s).unwrap());
        assert_eq!(bell_bound_eq2(&r).unwrap(), bell_bound_eq1(&s).unwrap());
    }

    #[test]
    fn disjoint_supports_are_unbounded_or_degenerate() {
        // Bob's outcome is fixed by Alice's setting: every eq1 denominator vanishes.
        let probs = vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let r = BellCorrelation::new(2, 1, 2, 2, probs, 1e-9).unwrap();
        assert!(matches!(bell_bound_eq1(&r), Err(Error::DegenerateDenominator(_))));
        // eq2 has the diagonal pairs finite and the off-diagonal ones unbounded.
        assert_eq!(bell_bound_eq2(&r).unwrap(), BoundValue::Unbounded);
    }

    #[test]
    fn unbounded_serializes_as_tag() {
        let s = serde_json::to_string(&BoundValue::Unbounded).unwrap();
        assert_eq!(s, r#"{"kind":"unbounded"}"#);
        let s = serde_json::to_string(&BoundValue::Finite(2.0)).unwrap();
        assert_eq!(s, r#"{"kind":"finite","value":2.0}"#);
    }
}
