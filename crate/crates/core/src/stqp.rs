//! Standard quadratic programs: minimize `q^T A q` over the probability simplex.
//!
//! Maximizing the PM bound over `q` is exactly this problem for the fidelity
//! matrix. Two solvers are provided:
//!
//! * [`optimize_q_exact`] enumerates all `2^N - 1` faces of the simplex. On the
//!   relative interior of a face `S` every stationary point satisfies
//!   `A_S q_S = lambda 1`, `1^T q_S = 1`; the global minimizer is one of the
//!   strictly positive solutions of these bordered systems.
//! * [`optimize_q_heuristic`] runs projected gradient descent from the uniform
//!   point, every vertex, and seeded flat-Dirichlet samples.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SimplexWeights;
use crate::pm_bound::quadratic_form;

/// Default largest `N` handled by face enumeration.
pub const DEFAULT_MAX_N: usize = 20;

/// Hard cap on face enumeration regardless of caller settings.
const ABSOLUTE_MAX_N: usize = 30;

const PGD_MAX_ITER: usize = 100_000;
const PGD_DISPLACEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StqpMethod {
    FaceEnumeration,
    MultistartPgd,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StqpResult {
    pub q_star: SimplexWeights,
    pub value: f64,
    pub certified_global: bool,
    pub method: StqpMethod,
    pub stationary_points_examined: usize,
    pub restarts: usize,
}

#[derive(Debug, Clone)]
struct Candidate {
    q: Vec<f64>,
    value: f64,
    support: usize,
}

impl Candidate {
    fn new(q: Vec<f64>, a: &DMatrix<f64>) -> Self {
        let value = quadratic_form(a, &q);
        let support = q.iter().filter(|&&v| v > 0.0).count();
        Self { q, value, support }
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Pick the minimizer: lowest value, then (among values within a relative
/// 1e-12 of the minimum) the largest support, then the lexicographically
/// smallest vector. The result does not depend on candidate order.
fn select(candidates: Vec<Candidate>, a: &DMatrix<f64>) -> Candidate {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let min = candidates.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * scale;
    candidates
        .into_iter()
        .filter(|c| c.value <= min + tol)
        .min_by(|x, y| y.support.cmp(&x.support).then_with(|| lexicographic(&x.q, &y.q)))
        .expect("nonempty candidate set")
}

fn normalize(mut q: Vec<f64>) -> Vec<f64> {
    q.iter_mut().for_each(|v| *v = v.max(0.0));
    let sum: f64 = q.iter().sum();
    q.iter_mut().for_each(|v| *v /= sum);
    q
}

fn finish(
    best: Candidate,
    a: &DMatrix<f64>,
    method: StqpMethod,
    examined: usize,
    restarts: usize,
) -> StqpResult {
    let q = normalize(best.q);
    let value = quadratic_form(a, &q);
    StqpResult {
        q_star: SimplexWeights::new(q, 1e-10).expect("normalized weights"),
        value,
        certified_global: method == StqpMethod::FaceEnumeration,
        method,
        stationary_points_examined: examined,
        restarts,
    }
}

/// Solve the bordered KKT system of face `support`; `None` if inconsistent.
fn face_stationary_point(a: &DMatrix<f64>, support: &[usize]) -> Option<Vec<f64>> {
    let s = support.len();
    let mut kkt = DMatrix::<f64>::zeros(s + 1, s + 1);
    for (i, &u) in support.iter().enumerate() {
        for (j, &v) in support.iter().enumerate() {
            kkt[(i, j)] = a[(u, v)];
        }
        kkt[(i, s)] = -1.0;
        kkt[(s, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(s + 1);
    rhs[s] = 1.0;

    let norm = kkt.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let consistent = |z: &DVector<f64>| -> bool {
        if !z.iter().all(|v| v.is_finite()) {
            return false;
        }
        let resid = (&kkt * z - &rhs).amax();
        resid <= 1e-9 * (1.0 + norm * z.amax())
    };

    if let Some(z) = kkt.clone().lu().solve(&rhs) {
        if consistent(&z) {
            return Some(z.rows(0, s).iter().copied().collect());
        }
    }
    // Singular face: least-norm solution, kept only if it actually solves the system.
    let svd = kkt.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let z = svd.solve(&rhs, eps).ok()?;
    consistent(&z).then(|| z.rows(0, s).iter().copied().collect())
}

/// Global minimum of `q^T A q` over the simplex by enumerating KKT points on every face.
pub fn optimize_q_exact(a: &DMatrix<f64>, max_n: usize) -> Result<StqpResult> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    if n > max_n.min(ABSOLUTE_MAX_N) {
        return Err(Error::TooLarge { n, max_n });
    }

    let candidates: Vec<Candidate> = (1u64..(1u64 << n))
        .into_par_iter()
        .filter_map(|mask| {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let q_s = face_stationary_point(a, &support)?;
            if !q_s.iter().all(|&v| v > 0.0) {
                return None;
            }
            let mut q = vec![0.0; n];
            for (&i, &v) in support.iter().zip(&q_s) {
                q[i] = v;
            }
            Some(Candidate::new(normalize(q), a))
        })
        .collect();

    let examined = candidates.len();
    Ok(finish(select(candidates, a), a, StqpMethod::FaceEnumeration, examined, 0))
}

/// Euclidean projection onto the probability simplex.
pub fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (i + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn projected_gradient_descent(a: &DMatrix<f64>, start: Vec<f64>, step: f64) -> Vec<f64> {
    let n = a.nrows();
    let mut q = start;
    let mut trial = vec![0.0; n];
    for _ in 0..PGD_MAX_ITER {
        for i in 0..n {
            let grad: f64 = 2.0 * (0..n).map(|j| a[(i, j)] * q[j]).sum::<f64>();
            trial[i] = q[i] - step * grad;
        }
        let next = project_to_simplex(&trial);
        let displacement = next
            .iter()
            .zip(&q)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        q = next;
        if displacement < PGD_DISPLACEMENT_TOL {
            break;
        }
    }
    q
}

/// Multistart projected gradient descent. Not certified.
///
/// Starts are the uniform point, the `N` vertices and `restarts` flat-Dirichlet
/// samples; sample `i` uses its own ChaCha stream derived from `seed`, so the
/// result is independent of thread count.
pub fn optimize_q_heuristic(a: &DMatrix<f64>, restarts: usize, seed: u64) -> Result<StqpResult> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::ShapeMismatch(format!("matrix is {}x{}", a.nrows(), a.ncols())));
    }
    if restarts == 0 {
        return Err(Error::OutOfRange("restarts must be at least 1".into()));
    }
    let lipschitz = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let step = 1.0 / (2.0 * lipschitz);

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(1 + n + restarts);
    starts.push(vec![1.0 / n as f64; n]);
    starts.extend((0..n).map(|i| SimplexWeights::point_mass(n, i).into_vec()));
    starts.extend((0..restarts).map(|i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        normalize(raw)
    }));

    let candidates: Vec<Candidate> = starts
        .into_par_iter()
        .map(|start| Candidate::new(projected_gradient_descent(a, start, step), a))
        .collect();
    let examined = candidates.len();
    Ok(finish(select(candidates, a), a, StqpMethod::MultistartPgd, examined, restarts))
}
