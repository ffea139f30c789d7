//! Procrustean registration of smoothed curves.
//!
//! The criterion is
//! `M_λ(θ) = (1/J) Σ_j ∫ (f̂_j(t + θ_j) - (1/J) Σ_j' f̂_j'(t + θ_j'))² dt`,
//! evaluated through Parseval on the rotated coefficients
//! `r_{j,k}(θ) = ĉ_{j,k} e^{i2πkθ_j}`:
//! `M_λ(θ) = (1/J) Σ_{j,k} |r_{j,k} - ā_k|²` with `ā_k = (1/J) Σ_j r_{j,k}`.
//!
//! `M_λ` is invariant under a common shift of all curves, so it is minimized
//! over the zero-sum set `Θ₀ = {θ ∈ [-1/2, 1/2]^J : Σ θ_j = 0}`. The
//! minimizer is found by a few rounds of alternating alignment on a coarse
//! grid followed by projected gradient descent with Armijo backtracking.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cis_turns, l2_distance_sq, FourierTemplate, ModelError, ShiftVector};
use crate::smoothing::SmoothedCurves;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistrationError {
    #[error("shift vector has {got} entries but there are {expected} curves")]
    LengthMismatch { got: usize, expected: usize },
    #[error("registration needs at least two curves, got {0}")]
    TooFewCurves(usize),
    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),
    #[error("support bound ρ = {0} must satisfy 0 < ρ < 1/16")]
    SupportTooWide(f64),
    #[error("{which}[{index}] = {value} lies outside [-ρ, ρ]")]
    OutOfSupport {
        which: &'static str,
        index: usize,
        value: f64,
    },
    #[error("θ must sum to zero, got Σθ = {0}")]
    NotCentered(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which identifiability constraint the optimizer projects onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    /// `Σ θ_j = 0`.
    #[default]
    ZeroMean,
    /// `θ_1 = 0`: the first curve is the reference.
    FirstFixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerOptions {
    /// Candidate shifts per curve in the alternating initialization.
    pub grid_points_per_shift: usize,
    pub max_iters: usize,
    /// Stop once the projected gradient norm falls below this.
    pub grad_tol: f64,
    /// Backtracking factor in `(0, 1)`.
    pub step_shrink: f64,
    /// Number of starting points; the first is always the zero vector.
    pub multistarts: usize,
    pub seed: u64,
    pub constraint: Constraint,
    /// Alternating alignment rounds before the descent.
    pub init_rounds: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            grid_points_per_shift: 64,
            max_iters: 500,
            grad_tol: 1e-8,
            step_shrink: 0.5,
            multistarts: 5,
            seed: 0,
            constraint: Constraint::ZeroMean,
            init_rounds: 2,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: &str| Err(RegistrationError::InvalidOptions(m.to_string()));
        if self.grid_points_per_shift == 0 || self.max_iters == 0 || self.multistarts == 0 {
            return bad("counts must be at least 1");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return bad("step_shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationResult {
    pub theta_hat: ShiftVector,
    /// `ā_k(θ̂)`, the Fréchet mean of the aligned smoothed curves.
    pub frechet_mean: FourierTemplate,
    pub criterion_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final criterion value of every start, in start order.
    pub multistart_values: Vec<f64>,
}

/// Outcome of one projected gradient descent.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub theta: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    /// Criterion value after every accepted step, starting at the initial point.
    pub trace: Vec<f64>,
}

fn check_len(curves: &SmoothedCurves, theta: &[f64]) -> Result<(), RegistrationError> {
    if theta.len() != curves.curves() {
        return Err(RegistrationError::LengthMismatch {
            got: theta.len(),
            expected: curves.curves(),
        });
    }
    Ok(())
}

/// Phase factors `e^{i2πkθ}` for `k = 0..=λ`.
fn phases(theta: f64, lambda: usize) -> Vec<Complex64> {
    (0..=lambda).map(|k| cis_turns(k as f64 * theta)).collect()
}

/// Rotated coefficients `r_{j,k}`, `k = -λ..=λ`, one row per curve.
fn rotated(curves: &SmoothedCurves, theta: &[f64]) -> Vec<Vec<Complex64>> {
    let lambda = curves.lambda();
    curves
        .rows()
        .iter()
        .zip(theta)
        .map(|(row, &th)| {
            let ph = phases(th, lambda);
            row.iter()
                .enumerate()
                .map(|(i, c)| {
                    let k = i as i64 - lambda as i64;
                    let p = if k >= 0 { ph[k as usize] } else { ph[(-k) as usize].conj() };
                    c * p
                })
                .collect()
        })
        .collect()
}

fn column_mean(rows: &[Vec<Complex64>]) -> Vec<Complex64> {
    let j = rows.len() as f64;
    let width = rows[0].len();
    (0..width)
        .map(|i| rows.iter().map(|r| r[i]).sum::<Complex64>() / j)
        .collect()
}

fn criterion_raw(curves: &SmoothedCurves, theta: &[f64]) -> f64 {
    let r = rotated(curves, theta);
    let mean = column_mean(&r);
    let total: f64 = r
        .iter()
        .map(|row| row.iter().zip(&mean).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>())
        .sum();
    total / r.len() as f64
}

fn gradient_raw(curves: &SmoothedCurves, theta: &[f64]) -> Vec<f64> {
    let lambda = curves.lambda() as i64;
    let r = rotated(curves, theta);
    let mean = column_mean(&r);
    let scale = 4.0 * PI / r.len() as f64;
    r.iter()
        .map(|row| {
            scale
                * row
                    .iter()
                    .zip(&mean)
                    .enumerate()
                    .map(|(i, (rk, ak))| (i as i64 - lambda) as f64 * (rk * ak.conj()).im)
                    .sum::<f64>()
        })
        .collect()
}

/// `M(θ') - M(θ)` without cancellation: the first Parseval term does not
/// depend on θ, and `ā' - ā` is built from `e^{ia} - e^{ib} = 2i sin((a-b)/2) e^{i(a+b)/2}`.
fn criterion_change_raw(curves: &SmoothedCurves, from: &[f64], to: &[f64]) -> f64 {
    let lambda = curves.lambda() as i64;
    let jf = curves.curves() as f64;
    let width = 2 * curves.lambda() + 1;
    let mut diff = vec![Complex64::new(0.0, 0.0); width];
    let mut sum = vec![Complex64::new(0.0, 0.0); width];
    for (j, row) in curves.rows().iter().enumerate() {
        let (a, b) = (from[j], to[j]);
        for (i, c) in row.iter().enumerate() {
            let k = (i as i64 - lambda) as f64;
            // e^{i2πkb} - e^{i2πka} = 2i sin(πk(b-a)) e^{iπk(a+b)}
            let mid = cis_turns(0.5 * k * (a + b));
            let delta = mid * Complex64::new(0.0, 2.0 * (PI * k * (b - a)).sin());
            diff[i] += c * delta;
            sum[i] += c * (cis_turns(k * a) + cis_turns(k * b));
        }
    }
    // M(to) - M(from) = Σ_k |ā_k(from)|² - |ā_k(to)|² = -Re Σ (ā' - ā) conj(ā' + ā)
    -diff
        .iter()
        .zip(&sum)
        .map(|(d, s)| (d * s.conj()).re)
        .sum::<f64>()
        / (jf * jf)
}

/// Value of `M_λ` at `θ`.
pub fn criterion_m(curves: &SmoothedCurves, theta: &ShiftVector) -> Result<f64, RegistrationError> {
    check_len(curves, theta.as_slice())?;
    Ok(criterion_raw(curves, theta.as_slice()))
}

/// Analytic gradient `∂M/∂θ_j = (4π/J) Σ_k k Im(r_{j,k} conj(ā_k))`.
pub fn grad_m(curves: &SmoothedCurves, theta: &ShiftVector) -> Result<Vec<f64>, RegistrationError> {
    check_len(curves, theta.as_slice())?;
    Ok(gradient_raw(curves, theta.as_slice()))
}

/// `M_λ(to) - M_λ(from)`, accurate even when the two points are very close.
pub fn criterion_change(curves: &SmoothedCurves, from: &ShiftVector, to: &ShiftVector) -> Result<f64, RegistrationError> {
    check_len(curves, from.as_slice())?;
    check_len(curves, to.as_slice())?;
    Ok(criterion_change_raw(curves, from.as_slice(), to.as_slice()))
}

/// `ā_k(θ) = (1/J) Σ_j ĉ_{j,k} e^{i2πkθ_j}` as a template.
pub fn frechet_mean(curves: &SmoothedCurves, theta: &ShiftVector) -> Result<FourierTemplate, RegistrationError> {
    check_len(curves, theta.as_slice())?;
    let mean = column_mean(&rotated(curves, theta.as_slice()));
    Ok(FourierTemplate::from_dense(mean)?)
}

fn project(theta: &mut [f64], constraint: Constraint) {
    match constraint {
        Constraint::ZeroMean => {
            // Euclidean projection: θ_j = clamp(v_j − τ) with τ the root of
            // the non-increasing map τ ↦ Σ clamp(v_j − τ); bisection on τ.
            let v = theta.to_vec();
            let total = |tau: f64| v.iter().map(|x| (x - tau).clamp(-0.5, 0.5)).sum::<f64>();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            if v.iter().all(|x| (x - mean).abs() <= 0.5) {
                theta.iter_mut().for_each(|x| *x -= mean);
                return;
            }
            let (mut lo, mut hi) = (
                v.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5,
                v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.5,
            );
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if total(mid) > 0.0 { lo = mid } else { hi = mid }
                if hi - lo <= f64::EPSILON * (1.0 + lo.abs()) {
                    break;
                }
            }
            let tau = 0.5 * (lo + hi);
            for (t, x) in theta.iter_mut().zip(&v) {
                *t = (x - tau).clamp(-0.5, 0.5);
            }
            // spread the rounding residual over the interior entries
            let free: Vec<usize> = (0..theta.len()).filter(|&i| theta[i].abs() < 0.5).collect();
            if !free.is_empty() {
                let r = theta.iter().sum::<f64>() / free.len() as f64;
                for &i in &free {
                    theta[i] = (theta[i] - r).clamp(-0.5, 0.5);
                }
            }
        }
        Constraint::FirstFixed => {
            let first = theta[0];
            for v in theta.iter_mut() {
                *v = (*v - first).clamp(-0.5, 0.5);
            }
            theta[0] = 0.0;
        }
    }
}

fn project_gradient(g: &mut [f64], constraint: Constraint) {
    match constraint {
        Constraint::ZeroMean => {
            let m = g.iter().sum::<f64>() / g.len() as f64;
            g.iter_mut().for_each(|v| *v -= m);
        }
        Constraint::FirstFixed => g[0] = 0.0,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Alternating Procrustes alignment: align every curve to the current mean by
/// exhaustive search over `grid_points` candidate shifts, then recompute the mean.
pub fn procrustes_init(curves: &SmoothedCurves, start: &[f64], grid_points: usize, rounds: usize, constraint: Constraint) -> Vec<f64> {
    let lambda = curves.lambda();
    let candidates: Vec<f64> = (0..grid_points).map(|i| -0.5 + i as f64 / grid_points as f64).collect();
    let table: Vec<Vec<Complex64>> = candidates.iter().map(|&c| phases(c, lambda)).collect();
    let mut theta = start.to_vec();
    project(&mut theta, constraint);
    for _ in 0..rounds {
        let mean = column_mean(&rotated(curves, &theta));
        for (j, row) in curves.rows().iter().enumerate() {
            // maximize Re Σ_k ĉ_{j,k} e^{i2πkc} conj(ā_k) over the candidates
            let mut best = (f64::NEG_INFINITY, theta[j]);
            for (c, ph) in candidates.iter().zip(&table) {
                let mut score = (row[lambda] * mean[lambda].conj()).re;
                for k in 1..=lambda {
                    score += 2.0 * (row[lambda + k] * ph[k] * mean[lambda + k].conj()).re;
                }
                if score > best.0 {
                    best = (score, *c);
                }
            }
            theta[j] = best.1;
        }
        project(&mut theta, constraint);
    }
    theta
}

/// Projected gradient descent from `start` with Barzilai–Borwein trial steps
/// and Armijo backtracking. Every accepted step strictly decreases `M_λ`.
pub fn descend(curves: &SmoothedCurves, start: &[f64], opts: &OptimizerOptions) -> Descent {
    const ARMIJO: f64 = 1e-4;
    let mut theta = start.to_vec();
    project(&mut theta, opts.constraint);
    let mut g = gradient_raw(curves, &theta);
    project_gradient(&mut g, opts.constraint);
    let mut value = criterion_raw(curves, &theta);
    let mut trace = vec![value];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= opts.grad_tol {
            converged = true;
            break;
        }
        let mut t = step;
        let accepted = loop {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(x, d)| x - t * d).collect();
            project(&mut cand, opts.constraint);
            let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
            if s.iter().all(|v| *v == 0.0) {
                break None;
            }
            let change = criterion_change_raw(curves, &theta, &cand);
            if change <= ARMIJO * dot(&g, &s) {
                break Some((cand, s, change));
            }
            t *= opts.step_shrink;
            if t < 1e-30 {
                break None;
            }
        };
        let Some((cand, s, change)) = accepted else {
            break;
        };
        let mut g_new = gradient_raw(curves, &cand);
        project_gradient(&mut g_new, opts.constraint);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-12, 1e6) } else { (2.0 * t).min(1e6) };
        theta = cand;
        g = g_new;
        value += change;
        trace.push(value);
        iterations += 1;
    }
    let grad_norm = dot(&g, &g).sqrt();
    if grad_norm <= opts.grad_tol {
        converged = true;
    }
    Descent {
        theta,
        iterations,
        converged,
        grad_norm,
        trace,
    }
}

/// Minimizes `M_λ` over the constrained set from several starts and returns
/// the best local optimum together with the aligned mean pattern.
pub fn estimate_shifts(curves: &SmoothedCurves, opts: &OptimizerOptions) -> Result<RegistrationResult, RegistrationError> {
    opts.validate()?;
    let j = curves.curves();
    if j < 2 {
        return Err(RegistrationError::TooFewCurves(j));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let starts: Vec<Vec<f64>> = (0..opts.multistarts)
        .map(|s| {
            if s == 0 {
                vec![0.0; j]
            } else {
                (0..j).map(|_| rng.random_range(-0.25..0.25)).collect()
            }
        })
        .collect();

    let mut best: Option<(f64, Descent)> = None;
    let mut multistart_values = Vec::with_capacity(starts.len());
    for start in &starts {
        let init = procrustes_init(curves, start, opts.grid_points_per_shift, opts.init_rounds, opts.constraint);
        let run = descend(curves, &init, opts);
        let value = criterion_raw(curves, &run.theta);
        multistart_values.push(value);
        let better = match &best {
            None => true,
            Some((bv, brun)) => {
                let tie = (value - bv).abs() <= 1e-12 * bv.abs().max(1.0);
                if tie {
                    dot(&run.theta, &run.theta) < dot(&brun.theta, &brun.theta)
                } else {
                    value < *bv
                }
            }
        };
        if better {
            best = Some((value, run));
        }
    }
    let (_, run) = best.expect("at least one start");
    let theta_hat = ShiftVector::new(run.theta)?;
    let frechet_mean = frechet_mean(curves, &theta_hat)?;
    Ok(RegistrationResult {
        criterion_value: criterion_raw(curves, theta_hat.as_slice()),
        theta_hat,
        frechet_mean,
        iterations: run.iterations,
        converged: run.converged,
        multistart_values,
    })
}

fn check_pair(theta: &ShiftVector, theta_star: &ShiftVector) -> Result<(), RegistrationError> {
    if theta.len() != theta_star.len() {
        return Err(RegistrationError::LengthMismatch {
            got: theta.len(),
            expected: theta_star.len(),
        });
    }
    Ok(())
}

/// Noiseless criterion
/// `D(θ) = Σ_k |c_k|² (1 - |(1/J) Σ_j e^{i2πk(θ_j - θ*_j)}|²)`, computed in the
/// equivalent pairwise form `Σ_k |c_k|² (4/J²) Σ_{j<j'} sin²(πk(u_j - u_j'))`,
/// `u = θ - θ*`, which has no cancellation near the minimum.
pub fn criterion_d(template: &FourierTemplate, theta: &ShiftVector, theta_star: &ShiftVector) -> Result<f64, RegistrationError> {
    check_pair(theta, theta_star)?;
    let u: Vec<f64> = theta.as_slice().iter().zip(theta_star.as_slice()).map(|(a, b)| a - b).collect();
    let j = u.len() as f64;
    let mut total = 0.0;
    for k in 1..=template.max_freq() as i64 {
        let weight = template.coeff(k).norm_sqr() + template.coeff(-k).norm_sqr();
        if weight == 0.0 {
            continue;
        }
        let mut pairs = 0.0;
        for a in 0..u.len() {
            for b in a + 1..u.len() {
                let s = (PI * ((k as f64 * (u[a] - u[b])) % 2.0)).sin();
                pairs += s * s;
            }
        }
        total += weight * 4.0 * pairs / (j * j);
    }
    Ok(total)
}

/// The two sides of the quadratic lower bound on `D` over `Θ₀`:
/// `lhs = D(θ) - D(θ*_Θ₀)` and
/// `rhs = 2|c_1|² · 2π² cos(8πρ) · (1/J)‖θ - θ*_Θ₀‖²`.
pub fn curvature_gap(
    template: &FourierTemplate,
    rho: f64,
    theta: &ShiftVector,
    theta_star: &ShiftVector,
) -> Result<(f64, f64), RegistrationError> {
    check_pair(theta, theta_star)?;
    if !(rho > 0.0 && rho < 1.0 / 16.0) {
        return Err(RegistrationError::SupportTooWide(rho));
    }
    let sum: f64 = theta.as_slice().iter().sum();
    if sum.abs() > 1e-10 * theta.len() as f64 {
        return Err(RegistrationError::NotCentered(sum));
    }
    for (which, v) in [("theta", theta), ("theta_star", theta_star)] {
        if let Some((index, &value)) = v.as_slice().iter().enumerate().find(|(_, x)| x.abs() > rho) {
            return Err(RegistrationError::OutOfSupport { which, index, value });
        }
    }
    let target = theta_star.centered()?;
    let lhs = criterion_d(template, theta, theta_star)? - criterion_d(template, &target, theta_star)?;
    let c = 2.0 * template.coeff(1).norm_sqr() * 2.0 * PI * PI * (8.0 * PI * rho).cos();
    let dist: f64 = theta
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / theta.len() as f64;
    Ok((lhs, c * dist))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorMode {
    /// Compare with the raw true shifts.
    Raw,
    /// Compare with `θ* - θ̄* 𝟙`.
    #[default]
    Centered,
    /// Compare with `θ* - θ*_1 𝟙`.
    Anchored,
}

/// `(1/J) ‖θ̂ - target‖²`.
pub fn shift_error(theta_hat: &ShiftVector, truth: &ShiftVector, mode: ErrorMode) -> Result<f64, RegistrationError> {
    check_pair(theta_hat, truth)?;
    let offset = match mode {
        ErrorMode::Raw => 0.0,
        ErrorMode::Centered => truth.mean(),
        ErrorMode::Anchored => truth.as_slice()[0],
    };
    Ok(theta_hat
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - (b - offset)).powi(2))
        .sum::<f64>()
        / truth.len() as f64)
}

/// `‖f̂ - f(· - θ̄*)‖²_{L²}`.
pub fn pattern_error(estimate: &FourierTemplate, template: &FourierTemplate, mean_shift: f64) -> f64 {
    l2_distance_sq(estimate, &template.shifted(mean_shift))
}
