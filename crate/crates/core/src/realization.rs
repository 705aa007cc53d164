//! Explicit quantum realizations and a local search for them.
//!
//! A realization is a set of density matrices `rho_x` and POVMs `{Pi_b^y}` in
//! dimension `d` with `p(b|x,y) = Tr(rho_x Pi_b^y)`. Finding one in dimension
//! `d` is upper-bound evidence; failing to find one proves nothing.
//!
//! The search is unconstrained. States are `rho = G G^dag / Tr(G G^dag)` and
//! measurements are `Pi_b = S^{-1/2} F_b F_b^dag S^{-1/2}` with
//! `S = sum_b F_b F_b^dag`, so every iterate is a valid realization.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PmCorrelation;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Tolerance for the Hermitian / PSD / trace / completeness checks.
pub const REALIZATION_TOL: f64 = 1e-10;

/// Regularization added to `S` before taking its inverse square root.
pub const POVM_REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    dim: usize,
    states: Vec<CMatrix>,
    povms: Vec<Vec<CMatrix>>,
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn check_psd(m: &CMatrix, what: &str) -> Result<()> {
    let asym = max_abs(&(m - m.adjoint()));
    if asym > REALIZATION_TOL {
        return Err(Error::InvalidRealization(format!("{what} is not Hermitian (deviation {asym:e})")));
    }
    let min_eig = SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -REALIZATION_TOL {
        return Err(Error::InvalidRealization(format!("{what} has eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// `Tr(A B)` for Hermitian `A`, `B` (real by construction).
#[inline]
fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.transpose().iter())
        .map(|(x, y)| (x * y).re)
        .sum()
}

impl Realization {
    pub fn new(dim: usize, states: Vec<CMatrix>, povms: Vec<Vec<CMatrix>>) -> Self {
        Self { dim, states, povms }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[CMatrix] {
        &self.states
    }

    pub fn povms(&self) -> &[Vec<CMatrix>] {
        &self.povms
    }

    /// Check positivity, unit trace and completeness.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim;
        let shape_ok = |m: &CMatrix| m.nrows() == d && m.ncols() == d;
        if d == 0 {
            return Err(Error::InvalidRealization("dimension must be positive".into()));
        }
        let all = self.states.iter().chain(self.povms.iter().flatten());
        if all.clone().any(|m| m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite())) {
            return Err(Error::InvalidRealization("non-finite matrix entry".into()));
        }
        for (x, rho) in self.states.iter().enumerate() {
            if !shape_ok(rho) {
                return Err(Error::InvalidRealization(format!("state {x} is not {d}x{d}")));
            }
            check_psd(rho, &format!("state {x}"))?;
            let tr = rho.trace();
            if (tr.re - 1.0).abs() > REALIZATION_TOL || tr.im.abs() > REALIZATION_TOL {
                return Err(Error::InvalidRealization(format!("state {x} has trace {tr}")));
            }
        }
        for (y, povm) in self.povms.iter().enumerate() {
            let mut total = CMatrix::zeros(d, d);
            for (b, effect) in povm.iter().enumerate() {
                if !shape_ok(effect) {
                    return Err(Error::InvalidRealization(format!("effect ({y},{b}) is not {d}x{d}")));
                }
                check_psd(effect, &format!("effect ({y},{b})"))?;
                total += effect;
            }
            let dev = max_abs(&(total - CMatrix::identity(d, d)));
            if dev > REALIZATION_TOL {
                return Err(Error::InvalidRealization(format!(
                    "measurement {y} sums to identity only within {dev:e}"
                )));
            }
        }
        Ok(())
    }

    /// `Tr(rho_x Pi_b^y)`.
    pub fn probability(&self, x: usize, y: usize, b: usize) -> f64 {
        trace_product(&self.states[x], &self.povms[y][b])
    }
}

/// Largest entrywise deviation between the realization's statistics and `p`.
///
/// Fails if shapes disagree or the realization violates its invariants.
pub fn verify_realization(r: &Realization, p: &PmCorrelation) -> Result<f64> {
    if r.states.len() != p.n_preparations()
        || r.povms.len() != p.n_measurements()
        || r.povms.iter().any(|povm| povm.len() != p.n_outcomes())
    {
        return Err(Error::ShapeMismatch(format!(
            "realization has {} states and {:?} effects, correlation is N={}, M={}, K={}",
            r.states.len(),
            r.povms.iter().map(Vec::len).collect::<Vec<_>>(),
            p.n_preparations(),
            p.n_measurements(),
            p.n_outcomes()
        )));
    }
    r.validate()?;
    let mut worst = 0.0f64;
    for x in 0..p.n_preparations() {
        for y in 0..p.n_measurements() {
            for b in 0..p.n_outcomes() {
                worst = worst.max((r.probability(x, y, b) - p.prob(x, y, b)).abs());
            }
        }
    }
    Ok(worst)
}

/// On-disk form: complex matrices as row-major interleaved `[re, im, re, im, ...]`.
#[derive(Debug, Serialize, Deserialize)]
struct RealizationFile {
    dim: usize,
    states: Vec<Vec<f64>>,
    povms: Vec<Vec<Vec<f64>>>,
}

fn interleave(m: &CMatrix) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

fn deinterleave(v: &[f64], d: usize) -> Result<CMatrix> {
    if v.len() != 2 * d * d {
        return Err(Error::ShapeMismatch(format!(
            "matrix has {} reals, expected {}",
            v.len(),
            2 * d * d
        )));
    }
    Ok(CMatrix::from_fn(d, d, |i, j| {
        let k = 2 * (i * d + j);
        C64::new(v[k], v[k + 1])
    }))
}

impl Serialize for Realization {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RealizationFile {
            dim: self.dim,
            states: self.states.iter().map(interleave).collect(),
            povms: self
                .povms
                .iter()
                .map(|povm| povm.iter().map(interleave).collect())
                .collect(),
        }
        .serialize(s)
    }
}

/// Parse the interleaved JSON form.
pub fn realization_from_json(text: &str) -> Result<Realization> {
    let file: RealizationFile = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let d = file.dim;
    let states = file.states.iter().map(|s| deinterleave(s, d)).collect::<Result<_>>()?;
    let povms = file
        .povms
        .iter()
        .map(|povm| povm.iter().map(|e| deinterleave(e, d)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(Realization::new(d, states, povms))
}

/// Squared-residual objective over the unconstrained factor parametrization.
///
/// Parameters are the real and imaginary parts (interleaved, row-major) of
/// the `N` state factors `G_x`, followed by the `M*K` effect factors
/// `F_b^y` in `[y][b]` order, each `d x d`.
pub struct RealizationObjective<'a> {
    target: &'a PmCorrelation,
    dim: usize,
}

struct Forward {
    /// `Tr(G G^dag)` per state.
    norms: Vec<f64>,
    states: Vec<CMatrix>,
    /// Per measurement: eigenvectors and regularized eigenvalues of `S`.
    spectra: Vec<(CMatrix, Vec<f64>)>,
    /// Per measurement: `S^{-1/2}`.
    inv_sqrt: Vec<CMatrix>,
    /// `F F^dag` per effect.
    raw_effects: Vec<Vec<CMatrix>>,
    effects: Vec<Vec<CMatrix>>,
    residuals: Vec<f64>,
}

impl<'a> RealizationObjective<'a> {
    pub fn new(target: &'a PmCorrelation, dim: usize) -> Self {
        Self { target, dim }
    }

    fn block(&self) -> usize {
        2 * self.dim * self.dim
    }

    fn n_factors(&self) -> usize {
        let p = self.target;
        p.n_preparations() + p.n_measurements() * p.n_outcomes()
    }

    pub fn n_params(&self) -> usize {
        self.block() * self.n_factors()
    }

    fn factor(&self, params: &[f64], i: usize) -> CMatrix {
        let b = self.block();
        deinterleave(&params[i * b..(i + 1) * b], self.dim).expect("block length")
    }

    fn effect_index(&self, y: usize, b: usize) -> usize {
        self.target.n_preparations() + y * self.target.n_outcomes() + b
    }

    fn forward(&self, params: &[f64], regularization: f64) -> Forward {
        let p = self.target;
        let (n, m, k, d) = (p.n_preparations(), p.n_measurements(), p.n_outcomes(), self.dim);
        let mut norms = Vec::with_capacity(n);
        let mut states = Vec::with_capacity(n);
        for x in 0..n {
            let g = self.factor(params, x);
            let gg = &g * g.adjoint();
            let t = gg.trace().re;
            norms.push(t);
            states.push(hermitian_part(&gg) / C64::new(t, 0.0));
        }

        let mut spectra = Vec::with_capacity(m);
        let mut inv_sqrt = Vec::with_capacity(m);
        let mut raw_effects = Vec::with_capacity(m);
        let mut effects = Vec::with_capacity(m);
        for y in 0..m {
            let raw: Vec<CMatrix> = (0..k)
                .map(|b| {
                    let f = self.factor(params, self.effect_index(y, b));
                    hermitian_part(&(&f * f.adjoint()))
                })
                .collect();
            let s = raw.iter().fold(CMatrix::zeros(d, d), |acc, e| acc + e);
            let eig = SymmetricEigen::new(hermitian_part(&s));
            let vals: Vec<f64> = eig
                .eigenvalues
                .iter()
                .map(|&v| v.max(0.0) + regularization)
                .collect();
            let u = eig.eigenvectors;
            let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                d,
                vals.iter().map(|&v| C64::new(1.0 / v.sqrt(), 0.0)),
            ));
            let w = hermitian_part(&(&u * diag * u.adjoint()));
            let pis: Vec<CMatrix> = raw.iter().map(|bm| hermitian_part(&(&w * bm * &w))).collect();
            spectra.push((u, vals));
            inv_sqrt.push(w);
            raw_effects.push(raw);
            effects.push(pis);
        }

        let mut residuals = Vec::with_capacity(n * m * k);
        for x in 0..n {
            for y in 0..m {
                for b in 0..k {
                    residuals.push(trace_product(&states[x], &effects[y][b]) - p.prob(x, y, b));
                }
            }
        }
        Forward {
            norms,
            states,
            spectra,
            inv_sqrt,
            raw_effects,
            effects,
            residuals,
        }
    }

    /// Sum of squared residuals.
    pub fn value(&self, params: &[f64]) -> f64 {
        self.forward(params, POVM_REGULARIZATION)
            .residuals
            .iter()
            .map(|r| r * r)
            .sum()
    }

    /// Objective and its gradient with respect to every real parameter.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let p = self.target;
        let (n, m, k, d) = (p.n_preparations(), p.n_measurements(), p.n_outcomes(), self.dim);
        let fw = self.forward(params, POVM_REGULARIZATION);
        let value = fw.residuals.iter().map(|r| r * r).sum();
        let resid = |x: usize, y: usize, b: usize| fw.residuals[(x * m + y) * k + b];
        let two = |v: f64| C64::new(2.0 * v, 0.0);
        let mut grad = vec![0.0; self.n_params()];
        let block = self.block();
        let mut write = |i: usize, g: &CMatrix| {
            let out = &mut grad[i * block..(i + 1) * block];
            out.copy_from_slice(&interleave(g));
        };

        // States: dL = Tr(E dRho) with E = sum 2 R Pi; grad_G = 2 (E - Tr(E rho) I) G / t.
        for x in 0..n {
            let mut e = CMatrix::zeros(d, d);
            for y in 0..m {
                for b in 0..k {
                    e += &fw.effects[y][b] * two(resid(x, y, b));
                }
            }
            let c = trace_product(&e, &fw.states[x]);
            let g = self.factor(params, x);
            let shifted = e - CMatrix::identity(d, d) * C64::new(c, 0.0);
            write(x, &(shifted * g * C64::new(2.0 / fw.norms[x], 0.0)));
        }

        // Effects: Pi_b = W B_b W with W = (S + eps)^{-1/2}.
        for y in 0..m {
            let w = &fw.inv_sqrt[y];
            let (u, vals) = &fw.spectra[y];
            let h: Vec<CMatrix> = (0..k)
                .map(|b| {
                    (0..n).fold(CMatrix::zeros(d, d), |acc, x| acc + &fw.states[x] * two(resid(x, y, b)))
                })
                .collect();
            let mut c = CMatrix::zeros(d, d);
            for b in 0..k {
                let bw = &fw.raw_effects[y][b] * w;
                c += &bw * &h[b] + &h[b] * bw.adjoint();
            }
            // Frechet derivative of s^{-1/2}: divided difference -1/(sqrt(a) sqrt(b) (sqrt(a)+sqrt(b))).
            let c_eig = u.adjoint() * c * u;
            let scaled = CMatrix::from_fn(d, d, |i, j| {
                let (ra, rb) = (vals[i].sqrt(), vals[j].sqrt());
                c_eig[(i, j)] * C64::new(-1.0 / (ra * rb * (ra + rb)), 0.0)
            });
            let dmat = u * scaled * u.adjoint();
            for b in 0..k {
                let z = w * &h[b] * w + &dmat;
                let f = self.factor(params, self.effect_index(y, b));
                write(self.effect_index(y, b), &(z * f * C64::new(2.0, 0.0)));
            }
        }
        (value, grad)
    }

    /// The realization encoded by `params` (unregularized normalization).
    pub fn realization(&self, params: &[f64]) -> Realization {
        let fw = self.forward(params, 0.0);
        Realization::new(self.dim, fw.states, fw.effects)
    }

    /// Parameters of the diagonal realization, embedded in the first `N`
    /// basis states. Extra dimensions are assigned to outcome 0. Requires `d >= N`.
    pub fn classical_params(&self) -> Option<Vec<f64>> {
        let p = self.target;
        let (n, d) = (p.n_preparations(), self.dim);
        if d < n {
            return None;
        }
        let mut params = Vec::with_capacity(self.n_params());
        for x in 0..n {
            let mut g = CMatrix::zeros(d, d);
            g[(x, x)] = C64::new(1.0, 0.0);
            params.extend(interleave(&g));
        }
        for y in 0..p.n_measurements() {
            for b in 0..p.n_outcomes() {
                let f = CMatrix::from_fn(d, d, |i, j| {
                    let v = match (i == j, i < n) {
                        (true, true) => p.prob(i, y, b).sqrt(),
                        (true, false) if b == 0 => 1.0,
                        _ => 0.0,
                    };
                    C64::new(v, 0.0)
                });
                params.extend(interleave(&f));
            }
        }
        Some(params)
    }

    /// Rescale every factor (and every measurement's factors jointly) to unit
    /// size. The encoded realization is unchanged.
    fn renormalize(&self, params: &mut [f64]) {
        let p = self.target;
        let block = self.block();
        let scale = |chunk: &mut [f64], target: f64| {
            let norm: f64 = chunk.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 && norm.is_finite() {
                chunk.iter_mut().for_each(|v| *v *= target / norm);
            }
        };
        for x in 0..p.n_preparations() {
            scale(&mut params[x * block..(x + 1) * block], 1.0);
        }
        let k = p.n_outcomes();
        for y in 0..p.n_measurements() {
            let start = self.effect_index(y, 0) * block;
            scale(&mut params[start..start + k * block], (self.dim as f64).sqrt());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOptions {
    pub restarts: usize,
    pub seed: u64,
    pub tol_target: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            restarts: 20,
            seed: 1,
            tol_target: 1e-6,
            max_iter: 20_000,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Found,
    NotFound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub status: SearchStatus,
    pub realization: Option<Realization>,
    pub residual: f64,
    pub restarts_used: usize,
    pub seed: u64,
}

/// Iterations between rescalings of the (scale-invariant) factors.
const RENORMALIZE_EVERY: usize = 200;

/// Steepest descent with backtracking (Armijo) line search. Each line search
/// starts from the Barzilai-Borwein step of the previous iteration.
///
/// A restart stops at `grad_tol`, at `max_iter`, or once the squared loss is
/// below `(tol_target / 2)^2`, which bounds every residual by `tol_target / 2`.
fn descend(objective: &RealizationObjective<'_>, mut params: Vec<f64>, opts: &SearchOptions) -> Vec<f64> {
    let good_enough = (0.5 * opts.tol_target).powi(2);
    let mut step = 1.0;
    let (mut value, mut grad) = objective.value_and_gradient(&params);
    for iter in 0..opts.max_iter {
        let grad_sq: f64 = grad.iter().map(|g| g * g).sum();
        if grad_sq.sqrt() < opts.grad_tol || value <= good_enough {
            break;
        }
        let mut accepted = None;
        while step > 1e-20 {
            let trial: Vec<f64> = params.iter().zip(&grad).map(|(x, g)| x - step * g).collect();
            let (trial_value, trial_grad) = objective.value_and_gradient(&trial);
            if trial_value <= value - 1e-4 * step * grad_sq {
                accepted = Some((trial, trial_value, trial_grad));
                break;
            }
            step *= 0.5;
        }
        let Some((mut next, next_value, next_grad)) = accepted else { break };
        if (iter + 1) % RENORMALIZE_EVERY == 0 {
            objective.renormalize(&mut next);
            params = next;
            (value, grad) = objective.value_and_gradient(&params);
            continue;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for ((x1, x0), (g1, g0)) in next.iter().zip(&params).zip(next_grad.iter().zip(&grad)) {
            let (ds, dg) = (x1 - x0, g1 - g0);
            ss += ds * ds;
            sy += ds * dg;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { step * 2.0 };
        params = next;
        value = next_value;
        grad = next_grad;
    }
    params
}

fn gaussian_start(n_params: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n_params).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Multistart local search for a `d`-dimensional realization of `p`.
///
/// Restart 0 is the classical diagonal realization when `d >= N`; all other
/// restarts start from seeded Gaussian factors, one ChaCha stream per restart.
/// The best restart (lowest residual, then lowest index) is returned.
pub fn search_realization(p: &PmCorrelation, d: usize, opts: &SearchOptions) -> Result<SearchOutcome> {
    if d == 0 {
        return Err(Error::OutOfRange("dimension must be at least 1".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::OutOfRange("restarts must be at least 1".into()));
    }
    if !(opts.tol_target > 0.0) {
        return Err(Error::OutOfRange("tol_target must be positive".into()));
    }
    let objective = RealizationObjective::new(p, d);
    let classical = objective.classical_params();

    let results: Vec<(f64, Option<Realization>)> = (0..opts.restarts)
        .into_par_iter()
        .map(|i| {
            let start = match (i, &classical) {
                (0, Some(c)) => c.clone(),
                _ => gaussian_start(objective.n_params(), opts.seed, i as u64),
            };
            let params = descend(&objective, start, opts);
            let realization = objective.realization(&params);
            match verify_realization(&realization, p) {
                Ok(residual) => (residual, Some(realization)),
                Err(_) => (f64::INFINITY, None),
            }
        })
        .collect();

    let (residual, realization) = results
        .into_iter()
        .enumerate()
        .min_by(|(i, a), (j, b)| a.0.total_cmp(&b.0).then(i.cmp(j)))
        .map(|(_, r)| r)
        .expect("at least one restart");

    let found = residual <= opts.tol_target;
    Ok(SearchOutcome {
        status: if found { SearchStatus::Found } else { SearchStatus::NotFound },
        realization: if found { realization } else { None },
        residual,
        restarts_used: opts.restarts,
        seed: opts.seed,
    })
}
