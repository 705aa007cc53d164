//! Dimension witnesses and comparison bounds for PM correlations.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::gen_rac;
use crate::model::PmCorrelation;
use crate::pm_bound::{ceil_dimension, pm_bound_uniform, ROUND_EPS};

/// Products below this count as zero in the incompressibility test.
pub const ZERO_PRODUCT_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    Compressibility,
    Quadratic,
    DetW2,
    PsdRankLb,
    Nayak,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum WitnessDetails {
    Compressibility {
        /// For each pair `x < x'`, a measurement with disjoint outcome supports.
        separating_measurement: Vec<(usize, usize, Option<usize>)>,
        unseparated_pairs: usize,
    },
    Quadratic {
        d: usize,
        threshold: f64,
    },
    DetW2 {
        w2: [[f64; 2]; 2],
        all_entries_unit: bool,
    },
    PsdRank {
        per_measurement: Vec<f64>,
        argmax_y: usize,
    },
    Nayak {
        beta: f64,
        m: usize,
        binary_entropy: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub witness_kind: WitnessKind,
    pub value: Option<f64>,
    pub implied_dimension_lb: Option<usize>,
    pub triggered: bool,
    pub details: WitnessDetails,
}

fn separating_measurement(p: &PmCorrelation, x: usize, x2: usize) -> Option<usize> {
    (0..p.n_measurements()).find(|&y| {
        p.distribution(x, y)
            .iter()
            .zip(p.distribution(x2, y))
            .all(|(u, v)| u * v < ZERO_PRODUCT_THRESHOLD)
    })
}

/// Sufficient condition for `D(p) = N`: every pair of preparations is
/// perfectly distinguished by some measurement.
pub fn check_incompressible(p: &PmCorrelation) -> WitnessReport {
    let n = p.n_preparations();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for x in 0..n {
        for x2 in x + 1..n {
            pairs.push((x, x2, separating_measurement(p, x, x2)));
        }
    }
    let unseparated = pairs.iter().filter(|(_, _, y)| y.is_none()).count();
    let triggered = unseparated == 0;
    WitnessReport {
        witness_kind: WitnessKind::Compressibility,
        value: None,
        implied_dimension_lb: triggered.then_some(n),
        triggered,
        details: WitnessDetails::Compressibility {
            separating_measurement: pairs,
            unseparated_pairs: unseparated,
        },
    }
}

/// `sum_{x,x'} max_y |p(1|x,y) - p(1|x',y)|^2`, compared with `(1 - 1/d) N^2`.
///
/// `triggered` means dimension `d` is ruled out. The implied bound is the
/// smallest `d'` with `value <= (1 - 1/d') N^2`.
pub fn quadratic_witness(p: &PmCorrelation, d: usize) -> Result<WitnessReport> {
    if p.n_outcomes() != 2 {
        return Err(Error::NotBinary(p.n_outcomes()));
    }
    if d == 0 {
        return Err(Error::OutOfRange("d must be at least 1".into()));
    }
    let n = p.n_preparations();
    let mut value = 0.0;
    for x in 0..n {
        for x2 in 0..n {
            let worst = (0..p.n_measurements())
                .map(|y| (p.prob(x, y, 1) - p.prob(x2, y, 1)).abs())
                .fold(0.0f64, f64::max);
            value += worst * worst;
        }
    }
    let n_sq = (n * n) as f64;
    let threshold = (1.0 - 1.0 / d as f64) * n_sq;
    let implied = if value < n_sq {
        ceil_dimension(n_sq / (n_sq - value))
    } else {
        n
    };
    Ok(WitnessReport {
        witness_kind: WitnessKind::Quadratic,
        value: Some(value),
        implied_dimension_lb: Some(implied),
        triggered: value > threshold + ROUND_EPS,
        details: WitnessDetails::Quadratic { d, threshold },
    })
}

/// Determinant of
///
/// ```text
/// W2 = [ p(0|0,0)-p(0|1,0)  p(0|2,0)-p(0|3,0) ]
///      [ p(0|0,1)-p(0|1,1)  p(0|2,1)-p(0|3,1) ]
/// ```
///
/// for four preparations, two binary measurements. `det = 2` forces `D(p) = 4`.
pub fn det_w2_witness(p: &PmCorrelation) -> Result<WitnessReport> {
    let shape = (p.n_preparations(), p.n_measurements(), p.n_outcomes());
    if shape != (4, 2, 2) {
        return Err(Error::WrongScenario {
            expected: "N=4, M=2, K=2".into(),
            got: format!("N={}, M={}, K={}", shape.0, shape.1, shape.2),
        });
    }
    let w2 = [0, 1].map(|y| {
        [
            p.prob(0, y, 0) - p.prob(1, y, 0),
            p.prob(2, y, 0) - p.prob(3, y, 0),
        ]
    });
    let det = w2[0][0] * w2[1][1] - w2[0][1] * w2[1][0];
    let triggered = (det - 2.0).abs() <= ROUND_EPS;
    let all_entries_unit = w2.iter().flatten().all(|v| (v.abs() - 1.0).abs() <= ROUND_EPS);
    Ok(WitnessReport {
        witness_kind: WitnessKind::DetW2,
        value: Some(det),
        implied_dimension_lb: triggered.then_some(4),
        triggered,
        details: WitnessDetails::DetW2 { w2, all_entries_unit },
    })
}

/// `max_y sum_b max_x p(b|x,y)`, a PSD-rank lower bound applied per measurement.
pub fn psd_rank_lower_bound(p: &PmCorrelation) -> WitnessReport {
    let per_measurement: Vec<f64> = (0..p.n_measurements())
        .map(|y| {
            (0..p.n_outcomes())
                .map(|b| (0..p.n_preparations()).map(|x| p.prob(x, y, b)).fold(0.0, f64::max))
                .sum()
        })
        .collect();
    let (argmax_y, value) = per_measurement
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (y, v)| if v > best.1 { (y, v) } else { best });
    WitnessReport {
        witness_kind: WitnessKind::PsdRankLb,
        value: Some(value),
        implied_dimension_lb: Some(ceil_dimension(value)),
        triggered: false,
        details: WitnessDetails::PsdRank { per_measurement, argmax_y },
    }
}

/// Binary entropy in bits, continuous at the endpoints.
pub fn binary_entropy(beta: f64) -> f64 {
    let term = |v: f64| if v <= 0.0 { 0.0 } else { -v * v.log2() };
    term(beta) + term(1.0 - beta)
}

fn nayak_raw(beta: f64, m: usize) -> Result<f64> {
    if !(0.5..=1.0).contains(&beta) {
        return Err(Error::OutOfRange(format!("beta must be in [1/2, 1], got {beta}")));
    }
    if m == 0 {
        return Err(Error::OutOfRange("m must be at least 1".into()));
    }
    Ok(((1.0 - binary_entropy(beta)) * m as f64).exp2())
}

/// Information-theoretic random access code bound `ceil(2^{(1-H(beta)) m})`.
pub fn nayak_bound(beta: f64, m: usize) -> Result<usize> {
    nayak_raw(beta, m).map(ceil_dimension)
}

pub fn nayak_witness(beta: f64, m: usize) -> Result<WitnessReport> {
    let raw = nayak_raw(beta, m)?;
    Ok(WitnessReport {
        witness_kind: WitnessKind::Nayak,
        value: Some(raw),
        implied_dimension_lb: Some(ceil_dimension(raw)),
        triggered: false,
        details: WitnessDetails::Nayak { beta, m, binary_entropy: binary_entropy(beta) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Winner {
    Eq3,
    Nayak,
    Tie,
}

impl Winner {
    pub fn as_str(self) -> &'static str {
        match self {
            Winner::Eq3 => "eq3",
            Winner::Nayak => "nayak",
            Winner::Tie => "tie",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RacRow {
    pub beta: f64,
    pub eq3_raw: f64,
    pub eq3_lb: usize,
    pub nayak_lb: usize,
    pub winner: Winner,
}

/// Grid `beta_min + i*step` for `i = 0..` while within `beta_max` (with 1e-9 slack).
pub fn beta_grid(beta_min: f64, beta_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::OutOfRange(format!("step must be positive, got {step}")));
    }
    if !(0.5..=1.0).contains(&beta_min) || !(0.5..=1.0).contains(&beta_max) || beta_min > beta_max {
        return Err(Error::OutOfRange(format!(
            "beta range [{beta_min}, {beta_max}] must lie in [1/2, 1]"
        )));
    }
    let count = ((beta_max - beta_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| (beta_min + i as f64 * step).min(beta_max))
        .collect())
}

/// Uniform-q bound versus the Nayak bound on random access code statistics.
pub fn compare_rac_bounds(m: usize, betas: &[f64]) -> Result<Vec<RacRow>> {
    betas
        .iter()
        .map(|&beta| {
            let report = pm_bound_uniform(&gen_rac(m, beta)?)?;
            let nayak_lb = nayak_bound(beta, m)?;
            let winner = match report.dimension_lb.cmp(&nayak_lb) {
                std::cmp::Ordering::Greater => Winner::Eq3,
                std::cmp::Ordering::Less => Winner::Nayak,
                std::cmp::Ordering::Equal => Winner::Tie,
            };
            Ok(RacRow {
                beta,
                eq3_raw: report.raw_bound,
                eq3_lb: report.dimension_lb,
                nayak_lb,
                winner,
            })
        })
        .collect()
}

/// Maximal runs of consecutive rows won by `winner`, as `(first beta, last beta)`.
pub fn winning_runs(rows: &[RacRow], winner: Winner) -> Vec<(f64, f64)> {
    let mut runs = Vec::new();
    let mut current: Option<(f64, f64)> = None;
    for row in rows {
        if row.winner == winner {
            current = Some(current.map_or((row.beta, row.beta), |(start, _)| (start, row.beta)));
        } else if let Some(run) = current.take() {
            runs.push(run);
        }
    }
    runs.extend(current);
    runs
}
