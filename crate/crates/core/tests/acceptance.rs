//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any of them fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use dimcert::bell::{bell_bound_eq1, bell_bound_eq2};
use dimcert::generators::{gen_nonconvexity_pair, gen_rac, gen_toy, mix, rac2_beta, rac3_beta, random_pm, random_simplex};
use dimcert::io::pm_to_json;
use dimcert::pm_bound::{fidelity_matrix, pm_bound, pm_bound_uniform, pm_to_bell};
use dimcert::realization::{search_realization, verify_realization, RealizationObjective, SearchOptions, SearchStatus};
use dimcert::stqp::{optimize_q_exact, optimize_q_heuristic, DEFAULT_MAX_N};
use dimcert::witness::{beta_grid, check_incompressible, compare_rac_bounds, det_w2_witness, psd_rank_lower_bound, winning_runs, Winner};
use dimcert::{PmCorrelation, SimplexWeights};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn toy_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for m in 1..=10 {
        let report = pm_bound_uniform(&gen_toy(m).map_err(err)?).map_err(err)?;
        let expected = (1usize << m) as f64;
        let e = (report.raw_bound - expected).abs();
        worst = worst.max(e);
        check(e <= 1e-9, format!("m={m}: raw bound {} != {expected}", report.raw_bound))?;
        check(report.dimension_lb == 1 << m, format!("m={m}: dimension_lb {}", report.dimension_lb))?;
    }
    Ok(format!("m=1..10 give 2^m, max error {worst:.1e}"))
}

fn rac_two_bits() -> Outcome {
    let p = gen_rac(2, rac2_beta()).map_err(err)?;
    let report = pm_bound_uniform(&p).map_err(err)?;
    check((report.raw_bound - 1.6).abs() <= 1e-9, format!("raw bound {}", report.raw_bound))?;
    check(report.dimension_lb == 2, format!("dimension_lb {}", report.dimension_lb))?;
    let opts = SearchOptions { restarts: 50, seed: 7, tol_target: 1e-6, ..SearchOptions::default() };
    let start = Instant::now();
    let out = search_realization(&p, 2, &opts).map_err(err)?;
    check(out.status == SearchStatus::Found, format!("search status {:?}, residual {:e}", out.status, out.residual))?;
    check(out.residual <= 1e-6, format!("residual {:e}", out.residual))?;
    let r = out.realization.as_ref().ok_or("found without realization")?;
    let verified = verify_realization(r, &p).map_err(err)?;
    check(verified == out.residual, "reported residual does not round-trip")?;
    Ok(format!(
        "raw bound {:.12}, qubit realization residual {:.2e} ({:.1?})",
        report.raw_bound,
        out.residual,
        start.elapsed()
    ))
}

fn rac_three_bits() -> Outcome {
    let report = pm_bound_uniform(&gen_rac(3, rac3_beta()).map_err(err)?).map_err(err)?;
    check((report.raw_bound - 24.0 / 17.0).abs() <= 1e-9, format!("raw bound {}", report.raw_bound))?;
    check(report.dimension_lb == 2, format!("dimension_lb {}", report.dimension_lb))?;
    Ok(format!("raw bound {:.12} (24/17)", report.raw_bound))
}

fn non_convexity() -> Outcome {
    let (p1, p2) = gen_nonconvexity_pair();
    let mixed = mix(&[p1.clone(), p2.clone()], &SimplexWeights::uniform(2)).map_err(err)?;
    let report = pm_bound_uniform(&mixed).map_err(err)?;
    check((report.raw_bound - 16.0 / 7.0).abs() <= 1e-9, format!("mixture raw bound {}", report.raw_bound))?;
    check(report.dimension_lb == 3, format!("mixture dimension_lb {}", report.dimension_lb))?;
    let mut parts = Vec::new();
    for (i, p) in [p1, p2].iter().enumerate() {
        let lb = pm_bound_uniform(p).map_err(err)?.dimension_lb;
        check(lb <= 2, format!("p{} has dimension_lb {lb}", i + 1))?;
        parts.push(lb);
    }
    Ok(format!("mixture {:.12} -> 3, components {:?}", report.raw_bound, parts))
}

fn nayak_crossovers() -> Outcome {
    let start = Instant::now();
    let betas = beta_grid(0.85, 0.99, 1e-4).map_err(err)?;
    let rows = compare_rac_bounds(2, &betas).map_err(err)?;
    let elapsed = start.elapsed();
    let runs = winning_runs(&rows, Winner::Nayak);
    let expected = [(0.8900, 0.9083), (0.9674, 0.9714)];
    check(runs.len() == expected.len(), format!("Nayak wins on {runs:?}"))?;
    for (&(lo, hi), &(elo, ehi)) in runs.iter().zip(&expected) {
        // Grid points inside the open interval: first and last are within one step of the endpoints.
        check(
            (lo - elo).abs() <= 0.002 && (hi - ehi).abs() <= 0.002,
            format!("run [{lo}, {hi}] vs ({elo}, {ehi})"),
        )?;
    }
    check(elapsed.as_secs_f64() < 10.0, format!("scan took {elapsed:?}"))?;
    Ok(format!("Nayak wins on {runs:?} over {} points in {elapsed:.1?}", rows.len()))
}

fn w2_chain() -> Outcome {
    let table = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]];
    let p = PmCorrelation::from_fn(4, 2, 2, 0.0, |x, y, b| if b == 0 { table[x][y] } else { 1.0 - table[x][y] })
        .map_err(err)?;
    let w = det_w2_witness(&p).map_err(err)?;
    check(w.triggered, "det W2 witness not triggered")?;
    check(check_incompressible(&p).triggered, "incompressibility not triggered")?;
    let raw = pm_bound_uniform(&p).map_err(err)?.raw_bound;
    check((raw - 4.0).abs() <= 1e-9, format!("raw bound {raw}"))?;
    Ok(format!("det W2 = {:?}, raw bound {raw}", w.value))
}

fn cross_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut dominance_violations = 0;
    let mut worst_dominance: f64 = 0.0;
    for i in 0..1000 {
        let (n, m, k) = (rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(2..=5));
        let zero_prob = if i % 2 == 0 { 0.0 } else { 0.5 };
        let p = random_pm(&mut rng, n, m, k, 1.0, zero_prob);
        let q = random_simplex(&mut rng, n);
        let pm = pm_bound(&p, &q).map_err(err)?.raw_bound;
        let r = pm_to_bell(&p, &q).map_err(err)?;
        let eq2 = bell_bound_eq2(&r).map_err(err)?.finite().ok_or("eq2 unbounded")?;
        worst = worst.max((eq2 - pm).abs());
        check((eq2 - pm).abs() <= 1e-9, format!("instance {i}: eq2 {eq2} vs pm {pm}"))?;
        if let Some(eq1) = bell_bound_eq1(&r).ok().and_then(|v| v.finite()) {
            if eq1 > eq2 + 1e-9 {
                dominance_violations += 1;
                worst_dominance = worst_dominance.max(eq1 - eq2);
            }
        }
    }
    Ok(format!(
        "1000 instances, max |eq2 - pm| {worst:.1e}; eq1 exceeded eq2 on {dominance_violations} (max excess {worst_dominance:.1e})"
    ))
}

/// Smallest value of `q^T A q` over the grid `q = c / 50`, `c` integer, or
/// `None` if no grid point goes below `threshold`.
///
/// Branch and bound over the coordinates. With `q_P` fixed and mass `r` left
/// for the free block `R`, write `A_RR = mu J + (A_RR - mu J)`; on the slice
/// `q_R^T J q_R = r^2`, so the value is at least
/// `q_P^T A q_P + mu r^2 + min (2 g.q_R + lambda |q_R|^2)` with
/// `g = (A q_P)_R` and `lambda` the smallest eigenvalue of `A_RR - mu J`.
/// The last minimum is a projection onto the scaled simplex when `lambda > 0`.
/// The last two coordinates form a one-dimensional quadratic minimized directly.
fn grid_search_below(a: &DMatrix<f64>, threshold: f64) -> Option<(Vec<usize>, f64)> {
    let n = a.nrows();
    let mut counts = vec![0usize; n];
    if n == 1 {
        counts[0] = GRID_UNITS;
        let v = a[(0, 0)];
        return (v < threshold).then_some((counts, v));
    }
    let shifts: Vec<Vec<(f64, f64)>> = (0..n)
        .map(|j| {
            let block = a.view((j, j), (n - j, n - j)).clone_owned();
            let sym = (&block + block.transpose()) * 0.5;
            let lo = sym.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = sym.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..=8)
                .map(|t| {
                    let mu = lo + (hi - lo) * t as f64 / 8.0;
                    let shifted = sym.map(|v| v - mu);
                    (mu, shifted.symmetric_eigenvalues().min() - 1e-12)
                })
                .collect()
        })
        .collect();
    rec(a, 0, GRID_UNITS, &mut counts, &shifts, threshold)
}

const GRID_UNITS: usize = 50;

fn grid_q(counts: &[usize]) -> Vec<f64> {
    counts.iter().map(|&c| c as f64 / GRID_UNITS as f64).collect()
}

/// Euclidean projection onto `{q >= 0, sum q = r}`.
fn project_scaled_simplex(v: &[f64], r: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let (mut cumsum, mut theta) = (0.0, 0.0);
    for (i, ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - r) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Lower bound on `min 2 g.q + lambda |q|^2` over `{q >= 0, sum q = r}`.
fn linear_isotropic_min(g: &[f64], lambda: f64, r: f64) -> f64 {
    let min_g = g.iter().cloned().fold(f64::INFINITY, f64::min);
    if lambda <= 0.0 {
        // |q|^2 <= r^2 on the slice.
        return 2.0 * r * min_g + lambda * r * r;
    }
    let target: Vec<f64> = g.iter().map(|v| -v / lambda).collect();
    let q = project_scaled_simplex(&target, r);
    let value: f64 = q.iter().zip(g).map(|(qi, gi)| 2.0 * gi * qi + lambda * qi * qi).sum();
    // Floating-point slack on the projection.
    value - 1e-12
}

fn rec(
    a: &DMatrix<f64>,
    j: usize,
    left: usize,
    counts: &mut Vec<usize>,
    shifts: &[Vec<(f64, f64)>],
    threshold: f64,
) -> Option<(Vec<usize>, f64)> {
    let n = a.nrows();
    let q = grid_q(counts);
    let fixed = quad(a, &q);
    let r = left as f64 / GRID_UNITS as f64;
    let g: Vec<f64> = (j..n).map(|i| (0..j).map(|l| 0.5 * (a[(i, l)] + a[(l, i)]) * q[l]).sum()).collect();
    let bound = shifts[j]
        .iter()
        .map(|&(mu, lambda)| fixed + mu * r * r + linear_isotropic_min(&g, lambda, r))
        .fold(f64::NEG_INFINITY, f64::max);
    if bound >= threshold {
        return None;
    }
    if j == n - 2 {
        return last_pair(a, left, counts, threshold);
    }
    for c in 0..=left {
        counts[j] = c;
        if let Some(hit) = rec(a, j + 1, left - c, counts, shifts, threshold) {
            return Some(hit);
        }
    }
    counts[j] = 0;
    None
}

/// Exact minimum over `c` of the value with `counts[n-2] = c`, `counts[n-1] = left - c`.
/// The value is quadratic in `c`, so only the endpoints and the integers next to
/// the vertex can be minimal.
fn last_pair(a: &DMatrix<f64>, left: usize, counts: &mut Vec<usize>, threshold: f64) -> Option<(Vec<usize>, f64)> {
    let n = a.nrows();
    let eval = |c: usize, counts: &mut Vec<usize>| {
        counts[n - 2] = c;
        counts[n - 1] = left - c;
        quad(a, &grid_q(counts))
    };
    let mut candidates = vec![0, left];
    if left >= 2 {
        let (f0, f1, f2) = (eval(0, counts), eval(1, counts), eval(2, counts));
        let alpha = (f2 - 2.0 * f1 + f0) / 2.0;
        let beta = f1 - f0 - alpha;
        if alpha > 0.0 {
            let vertex = (-beta / (2.0 * alpha)).clamp(0.0, left as f64).floor() as usize;
            for c in vertex.saturating_sub(1)..=(vertex + 2).min(left) {
                candidates.push(c);
            }
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for c in candidates {
        let v = eval(c, counts);
        if v < threshold && best.as_ref().map_or(true, |b| v < b.1) {
            best = Some((counts.clone(), v));
        }
    }
    counts[n - 2] = 0;
    counts[n - 1] = 0;
    best
}

fn quad(a: &DMatrix<f64>, q: &[f64]) -> f64 {
    let n = q.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += q[i] * a[(i, j)] * q[j];
        }
    }
    total
}

fn stqp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let start = Instant::now();
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..500 {
        let n = rng.gen_range(1..=8);
        let (m, k) = (rng.gen_range(1..=3), rng.gen_range(2..=3));
        let p = random_pm(&mut rng, n, m, k, 0.7, 0.3);
        let a = fidelity_matrix(&p).matrix().clone();
        let exact = optimize_q_exact(&a, DEFAULT_MAX_N).map_err(err)?;
        if let Some((counts, v)) = grid_search_below(&a, exact.value - 1e-9) {
            return Err(format!("instance {i}: grid point {counts:?} gives {v} < exact {}", exact.value));
        }
        let heuristic = optimize_q_heuristic(&a, 4, i).map_err(err)?;
        worst_gap = worst_gap.max(exact.value - heuristic.value);
        check(
            heuristic.value >= exact.value - 1e-9,
            format!("instance {i}: heuristic {} below exact {}", heuristic.value, exact.value),
        )?;
    }
    Ok(format!(
        "500 matrices: no grid point below exact, max (exact - heuristic) {worst_gap:.1e} ({:.1?})",
        start.elapsed()
    ))
}

fn psd_rank_subordination() -> Outcome {
    let mut values = Vec::new();
    for m in 1..=10 {
        let p = gen_toy(m).map_err(err)?;
        let psd = psd_rank_lower_bound(&p).value.ok_or("no value")?;
        let eq3 = pm_bound_uniform(&p).map_err(err)?.raw_bound;
        check((psd - 2.0).abs() <= 1e-12, format!("m={m}: PSD-rank bound {psd}"))?;
        check((eq3 - (1usize << m) as f64).abs() <= 1e-9, format!("m={m}: uniform bound {eq3}"))?;
        if m >= 2 {
            check(eq3 > psd, format!("m={m}: {eq3} does not beat {psd}"))?;
        }
        values.push(eq3 as usize);
    }
    Ok(format!("PSD-rank bound 2 for m=1..10 while the fidelity bound gives {values:?}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let (n, m, k, d) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(2..=3), rng.gen_range(1..=3));
        let p = random_pm(&mut rng, n, m, k, 1.0, 0.2);
        let obj = RealizationObjective::new(&p, d);
        let params: Vec<f64> = (0..obj.n_params()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (_, grad) = obj.value_and_gradient(&params);
        let h = 1e-6;
        let mut diff = 0.0;
        for (j, g) in grad.iter().enumerate() {
            let (mut plus, mut minus) = (params.clone(), params.clone());
            plus[j] += h;
            minus[j] -= h;
            let fd = (obj.value(&plus) - obj.value(&minus)) / (2.0 * h);
            diff += (g - fd).powi(2);
        }
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        let rel = diff.sqrt() / norm.max(1e-300);
        worst = worst.max(rel);
        check(rel <= 1e-4, format!("instance {i} (N={n}, M={m}, K={k}, d={d}): relative error {rel:e}"))?;
    }
    Ok(format!("50 instances, worst relative error {worst:.1e}"))
}

fn run_cli(args: &[&str], stdin: Option<&str>) -> Result<Vec<u8>, String> {
    use std::io::Write;
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dimcert"));
    cmd.args(args).stdout(std::process::Stdio::piped()).stderr(std::process::Stdio::piped());
    cmd.stdin(if stdin.is_some() { std::process::Stdio::piped() } else { std::process::Stdio::null() });
    let mut child = cmd.spawn().map_err(err)?;
    if let Some(input) = stdin {
        child.stdin.take().expect("piped").write_all(input.as_bytes()).map_err(err)?;
    }
    let out = child.wait_with_output().map_err(err)?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {}: {}", out.status, String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let write = |name: &str, text: String| std::fs::write(Path::new(&path(name)), text).map_err(err);
    write("toy3.json", pm_to_json(&gen_toy(3).map_err(err)?))?;
    write("rac2.json", pm_to_json(&gen_rac(2, rac2_beta()).map_err(err)?))?;
    let (p1, p2) = gen_nonconvexity_pair();
    write("mix.json", pm_to_json(&mix(&[p1, p2], &SimplexWeights::uniform(2)).map_err(err)?))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    write("rand.json", pm_to_json(&random_pm(&mut rng, 9, 3, 3, 1.0, 0.2)))?;
    let bell = run_cli(&["transform", &path("rac2.json")], None)?;
    write("bell.json", String::from_utf8_lossy(&bell).into_owned())?;

    let (toy, rac, mixf, rand, bellf) = (path("toy3.json"), path("rac2.json"), path("mix.json"), path("rand.json"), path("bell.json"));
    let commands: Vec<Vec<&str>> = vec![
        vec!["generate", "toy", "--m", "3"],
        vec!["generate", "rac", "--m", "2", "--beta", "0.8536"],
        vec!["generate", "nonconvexity"],
        vec!["generate", "nonconvexity", "--mix", "0.5,0.5"],
        vec!["bound", &toy, "--q", "uniform"],
        vec!["bound", &rand, "--q", "optimize"],
        vec!["bound", &rand, "--q", "optimize", "--exact-threshold", "4", "--restarts", "16", "--seed", "5"],
        vec!["bell", &bellf],
        vec!["witness", &mixf, "--kind", "all"],
        vec!["witness", &toy, "--kind", "all", "--d", "3"],
        vec!["realize", &rac, "--dim", "2", "--restarts", "6", "--seed", "3"],
        vec!["realize", &mixf, "--dim", "2"],
        vec!["realize", &mixf, "--dim", "2", "--force", "--restarts", "3", "--tol", "1e-3"],
        vec!["rac-scan", "--m", "2", "--beta-min", "0.85", "--beta-max", "0.99", "--step", "0.001"],
        vec!["transform", &rand],
    ];
    for args in &commands {
        let mut outputs = Vec::new();
        for threads in ["1", "8", "1", "8"] {
            let mut full = vec!["--threads", threads];
            full.extend(args.iter().copied());
            outputs.push(run_cli(&full, None)?);
        }
        check(outputs.windows(2).all(|w| w[0] == w[1]), format!("stdout differs for {args:?}"))?;
    }
    Ok(format!("{} commands byte-identical across runs and --threads 1/8", commands.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("toy exactness", toy_exactness),
        ("RAC tightness, 2 bits", rac_two_bits),
        ("RAC tightness, 3 bits", rac_three_bits),
        ("non-convexity witness", non_convexity),
        ("Nayak crossover reproduction", nayak_crossovers),
        ("W2 chain", w2_chain),
        ("cross-check identity", cross_check),
        ("StQP oracle equivalence", stqp_oracle),
        ("PSD-rank bound subordination", psd_rank_subordination),
        ("gradient correctness", gradient_check),
        ("CLI determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
