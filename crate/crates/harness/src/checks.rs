//! Acceptance checks shared by the `selftest` subcommand and the acceptance
//! test target. Each check compares the library against an independent
//! oracle (finite differences, quadrature, exhaustive search) or reproduces a
//! Monte Carlo trend.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use shiftreg::num_complex::Complex64;
use shiftreg::registration::curvature_gap;
use shiftreg::synthdata::{rng_for, sample_with_spectrum, Stream};
use shiftreg::{
    criterion_d, criterion_m, dft_coeffs, estimate_shifts, fisher_info, generate_dataset, grad_m, pattern_error,
    sample_shifts, shift_error, smoothed_eval, sup_derivative, van_trees_shift_bound, BoundInputs, BoundMode,
    DesignGrid, ErrorMode, FourierTemplate, OptimizerOptions, ProcessRealization, ShiftDensitySpec, ShiftVector,
    SmoothedCurves, StationaryCovSpec, StationarySpectrum,
};

use crate::config::{ExperimentConfig, Scenario};
use crate::experiment::{run_experiment, ErrorRecord};
use crate::output::write_csv;
use crate::summary::summarize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    /// Informational outcome of a check without a hard threshold.
    Report,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Report => "REPORT",
        };
        write!(f, "[{tag}] {:>2} {} ({:.1}s): {}", self.id, self.name, self.seconds, self.detail)
    }
}

pub const ALL: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
/// Checks that finish in seconds; the rest run full Monte Carlo grids.
pub const QUICK: [u8; 7] = [1, 5, 6, 7, 8, 9, 10];

pub fn name(id: u8) -> &'static str {
    match id {
        1 => "zero-noise exact recovery",
        2 => "SIM: n=1024 beats n=512",
        3 => "stationary Z: n=1024 beats n=512 (pattern)",
        4 => "non-stationary Z degrades shift error",
        5 => "curvature lower bound on D",
        6 => "gradient vs finite differences",
        7 => "Fourier criteria vs quadrature",
        8 => "estimator vs exhaustive grid search",
        9 => "stationary sampler fidelity",
        10 => "lower-bound properties",
        11 => "determinism of experiment output",
        _ => "unknown check",
    }
}

type CheckResult = (Status, String);

fn verdict(ok: bool, detail: String) -> CheckResult {
    (if ok { Status::Pass } else { Status::Fail }, detail)
}

/// Runs one check, turning panics into failures.
pub fn run(id: u8) -> CheckOutcome {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| match id {
        1 => zero_noise_recovery(),
        2 => sim_trend(),
        3 => stationary_trend(),
        4 => nonstationary_degradation(),
        5 => curvature_suite(),
        6 => gradient_check(),
        7 => quadrature_check(),
        8 => brute_force_check(),
        9 => sampler_fidelity(),
        10 => bound_properties(),
        11 => determinism(),
        _ => (Status::Fail, format!("no check with id {id}")),
    }));
    let (status, detail) = outcome.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        (Status::Fail, format!("panicked: {msg}"))
    });
    CheckOutcome {
        id,
        name: name(id),
        status,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn sin_cos() -> FourierTemplate {
    FourierTemplate::sin_cos()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random Hermitian coefficient rows for `j` curves at cutoff `lambda`.
fn random_curves<R: Rng>(rng: &mut R, j: usize, lambda: usize) -> SmoothedCurves {
    let rows = (0..j)
        .map(|_| {
            let positive: Vec<Complex64> = (0..lambda).map(|_| Complex64::new(normal(rng), normal(rng))).collect();
            let mut row = vec![Complex64::new(0.0, 0.0); 2 * lambda + 1];
            row[lambda] = Complex64::new(normal(rng), 0.0);
            for (k, c) in positive.iter().enumerate() {
                row[lambda + k + 1] = *c;
                row[lambda - k - 1] = c.conj();
            }
            row
        })
        .collect();
    SmoothedCurves::from_rows(rows, lambda, DesignGrid::new(4 * lambda + 8).unwrap()).unwrap()
}

fn experiment(scenario: Scenario) -> ExperimentConfig {
    ExperimentConfig::for_scenario(scenario)
}

fn medians(records: &[ErrorRecord]) -> BTreeMap<(usize, usize), (f64, f64)> {
    summarize(records)
        .unwrap()
        .into_iter()
        .map(|c| ((c.n, c.j), (c.shift.median, c.pattern.median)))
        .collect()
}

fn zero_noise_recovery() -> CheckResult {
    let start = Instant::now();
    let template = sin_cos();
    let density = ShiftDensitySpec::uniform(0.1).unwrap();
    let (n, j) = (512, 10);
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = 0;
    for rep in 0..20u64 {
        let seed = 1000 + rep;
        let shifts = sample_shifts(j, &density, seed).unwrap();
        let z = vec![ProcessRealization::zero(); j];
        let data = generate_dataset(&template, &shifts, &z, 0.0, DesignGrid::new(n).unwrap(), seed).unwrap();
        let curves = dft_coeffs(&data, 7).unwrap();
        let res = estimate_shifts(&curves, &OptimizerOptions { seed, ..Default::default() }).unwrap();
        let se = shift_error(&res.theta_hat, &shifts, ErrorMode::Centered).unwrap();
        let pe = pattern_error(&res.frechet_mean, &template, shifts.mean());
        worst = (worst.0.max(se), worst.1.max(pe));
        if se <= 1e-8 && pe <= 1e-8 {
            ok += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        ok == 20 && secs < 5.0,
        format!("{ok}/20 recovered; worst shift err {:.2e}, worst pattern err {:.2e}; {secs:.2}s (limit 5s)", worst.0, worst.1),
    )
}

fn trend_table(m: &BTreeMap<(usize, usize), (f64, f64)>, js: &[usize], pick: fn(&(f64, f64)) -> f64) -> (usize, String) {
    let mut wins = 0;
    let mut parts = Vec::new();
    for &j in js {
        let (a, b) = (pick(&m[&(512, j)]), pick(&m[&(1024, j)]));
        if b < a {
            wins += 1;
        }
        parts.push(format!("J={j}: {a:.2e}->{b:.2e}"));
    }
    (wins, parts.join(", "))
}

fn sim_trend() -> CheckResult {
    let start = Instant::now();
    let cfg = experiment(Scenario::Sim);
    let records = run_experiment(&cfg).unwrap();
    let m = medians(&records);
    let (shift_wins, shift_txt) = trend_table(&m, &cfg.j_list, |v| v.0);
    let (pattern_wins, pattern_txt) = trend_table(&m, &cfg.j_list, |v| v.1);
    let secs = start.elapsed().as_secs_f64();
    let k = cfg.j_list.len();
    verdict(
        shift_wins == k && pattern_wins == k && secs < 600.0,
        format!("median shift err (n=512->1024) [{shift_txt}]; median pattern err [{pattern_txt}]; {} records in {secs:.1}s", records.len()),
    )
}

fn stationary_trend() -> CheckResult {
    let cfg = experiment(Scenario::Stationary);
    let records = run_experiment(&cfg).unwrap();
    let m = medians(&records);
    let (wins, txt) = trend_table(&m, &cfg.j_list, |v| v.1);
    let mut detail = format!("{wins}/5 J values with lower median pattern err at n=1024 [{txt}]");
    if wins < 4 {
        // context only: how often the ordering holds under other master seeds
        let held = (1..=12u64)
            .filter(|&seed| {
                let r = run_experiment(&ExperimentConfig { seed, ..cfg.clone() }).unwrap();
                trend_table(&medians(&r), &cfg.j_list, |v| v.1).0 >= 4
            })
            .count();
        detail.push_str(&format!("; with master seeds 1..12 the ordering held in {held}/12 runs"));
    }
    verdict(wins >= 4, detail)
}

fn nonstationary_degradation() -> CheckResult {
    let mean_shift = |scenario| {
        let cfg = ExperimentConfig {
            n_list: vec![1024],
            j_list: vec![100],
            ..experiment(scenario)
        };
        let r = run_experiment(&cfg).unwrap();
        r.iter().map(|r| r.shift_error).sum::<f64>() / r.len() as f64
    };
    let ns = mean_shift(Scenario::Nonstationary);
    let st = mean_shift(Scenario::Stationary);
    let ratio = ns / st;
    let detail = format!("mean shift err at (n=1024, J=100): non-stationary {ns:.3e}, stationary {st:.3e}, ratio {ratio:.2} (target >= 2)");
    if ratio >= 2.0 {
        (Status::Pass, detail)
    } else {
        (Status::Report, detail)
    }
}

/// Uniform draw from `Θ₀ ∩ [-ρ, ρ]^J` by centering and rejection.
fn draw_centered<R: Rng>(rng: &mut R, j: usize, rho: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..j).map(|_| rng.random_range(-rho..=rho)).collect();
        let m = v.iter().sum::<f64>() / j as f64;
        let c: Vec<f64> = v.iter().map(|x| x - m).collect();
        if c.iter().all(|x| x.abs() <= rho) {
            return c;
        }
    }
}

fn curvature_suite() -> CheckResult {
    let f = sin_cos();
    let rho = 0.05;
    let mut rng = rng_for(5, Stream::Shift);
    let mut violations = 0;
    let mut min_margin = f64::INFINITY;
    let mut cases = 0;
    for &j in &[2usize, 5, 20] {
        for i in 0..334 {
            let star: Vec<f64> = (0..j).map(|_| rng.random_range(-rho..=rho)).collect();
            let theta = if i % 2 == 0 {
                draw_centered(&mut rng, j, rho)
            } else {
                // near the centered truth, where the bound is tightest
                let m = star.iter().sum::<f64>() / j as f64;
                let eps = 10f64.powf(rng.random_range(-6.0..-2.0));
                let d = draw_centered(&mut rng, j, 1.0);
                let cand: Vec<f64> = star.iter().zip(&d).map(|(s, d)| s - m + eps * d).collect();
                let cm = cand.iter().sum::<f64>() / j as f64;
                let cand: Vec<f64> = cand.iter().map(|x| x - cm).collect();
                if cand.iter().any(|x| x.abs() > rho) {
                    draw_centered(&mut rng, j, rho)
                } else {
                    cand
                }
            };
            let theta = ShiftVector::new(theta).unwrap();
            let star = ShiftVector::new(star).unwrap();
            let (lhs, rhs) = curvature_gap(&f, rho, &theta, &star).unwrap();
            cases += 1;
            if lhs < rhs {
                violations += 1;
            }
            if rhs > 0.0 {
                min_margin = min_margin.min(lhs / rhs);
            }
        }
    }
    verdict(
        violations == 0 && cases >= 1000,
        format!("{cases} pairs (J in 2,5,20; rho=0.05), {violations} violations, smallest lhs/rhs = {min_margin:.4}"),
    )
}

fn gradient_check() -> CheckResult {
    let mut rng = rng_for(6, Stream::Process);
    let h = 1e-6;
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..100 {
        let j = rng.random_range(2..=12);
        let lambda = rng.random_range(1..=8);
        let curves = random_curves(&mut rng, j, lambda);
        let theta: Vec<f64> = (0..j).map(|_| rng.random_range(-0.45..0.45)).collect();
        let g = grad_m(&curves, &ShiftVector::new(theta.clone()).unwrap()).unwrap();
        for i in 0..j {
            let mut up = theta.clone();
            let mut down = theta.clone();
            up[i] += h;
            down[i] -= h;
            let mp = criterion_m(&curves, &ShiftVector::new(up).unwrap()).unwrap();
            let mm = criterion_m(&curves, &ShiftVector::new(down).unwrap()).unwrap();
            let fd = (mp - mm) / (2.0 * h);
            let err = (g[i] - fd).abs();
            let scale = fd.abs().max(1e-4);
            worst = worst.max(err / scale);
            if err > 1e-5 * fd.abs() + 1e-9 {
                failures += 1;
            }
        }
    }
    verdict(
        failures == 0,
        format!("100 instances, {failures} components outside 1e-5 relative (+1e-9 abs); worst relative deviation {worst:.2e}"),
    )
}

/// Periodic trapezoid rule with `m` nodes.
fn periodic_mean(m: usize, f: impl Fn(f64) -> f64) -> f64 {
    (0..m).map(|i| f(i as f64 / m as f64)).sum::<f64>() / m as f64
}

fn quadrature_check() -> CheckResult {
    let mut rng = rng_for(7, Stream::Noise);
    let m = 2048;
    let (mut worst_m, mut worst_d) = (0.0f64, 0.0f64);
    let f = sin_cos();
    for _ in 0..100 {
        let j = rng.random_range(2..=10);
        let lambda = rng.random_range(1..=8);
        let curves = random_curves(&mut rng, j, lambda);
        let theta: Vec<f64> = (0..j).map(|_| rng.random_range(-0.5..0.5)).collect();
        let value = criterion_m(&curves, &ShiftVector::new(theta.clone()).unwrap()).unwrap();
        // (1/J) Σ_j ∫ (f̂_j(t + θ_j) - mean_j' f̂_j'(t + θ_j'))² dt
        let direct = periodic_mean(m, |t| {
            let vals: Vec<f64> = (0..j).map(|i| smoothed_eval(&curves, i, t + theta[i])).collect();
            let mean = vals.iter().sum::<f64>() / j as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / j as f64
        });
        worst_m = worst_m.max((value - direct).abs() / direct.abs());

        let star: Vec<f64> = (0..j).map(|_| rng.random_range(-0.5..0.5)).collect();
        let theta = ShiftVector::new(theta).unwrap();
        let d = criterion_d(&f, &theta, &ShiftVector::new(star.clone()).unwrap()).unwrap();
        let direct = periodic_mean(m, |t| {
            let vals: Vec<f64> = (0..j).map(|i| f.eval(t + theta.as_slice()[i] - star[i])).collect();
            let mean = vals.iter().sum::<f64>() / j as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / j as f64
        });
        worst_d = worst_d.max((d - direct).abs() / direct.abs());
    }
    verdict(
        worst_m <= 1e-8 && worst_d <= 1e-8,
        format!("100 instances, worst relative gap: M {worst_m:.2e}, D {worst_d:.2e} (tolerance 1e-8)"),
    )
}

/// Minimum of `M` over the grid `{-1/2 + i h}` restricted to `Θ₀`, for two or
/// three curves. Uses `M = (1/J) Σ_j Σ_k |c_jk|² - Σ_k |ā_k|²`.
fn grid_minimum(curves: &SmoothedCurves, h: f64) -> (f64, Vec<f64>) {
    let j = curves.curves();
    let lambda = curves.lambda();
    let steps = (1.0 / h).round() as usize;
    let energy: f64 = curves.rows().iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() / j as f64;
    // table[j][i][k] = c_{j,k} e^{i2πk(-1/2 + i h)}, k = 1..=λ
    let table: Vec<Vec<Vec<Complex64>>> = curves
        .rows()
        .iter()
        .map(|row| {
            (0..=steps)
                .map(|i| {
                    let t = -0.5 + i as f64 * h;
                    (1..=lambda)
                        .map(|k| row[lambda + k] * Complex64::from_polar(1.0, 2.0 * PI * k as f64 * t))
                        .collect()
                })
                .collect()
        })
        .collect();
    let c0: f64 = curves.rows().iter().map(|r| r[lambda].re).sum::<f64>() / j as f64;
    let jf = j as f64;
    let value = |idx: &[usize]| {
        let mut s = c0 * c0;
        for k in 0..lambda {
            let a: Complex64 = idx.iter().enumerate().map(|(c, &i)| table[c][i][k]).sum::<Complex64>() / jf;
            s += 2.0 * a.norm_sqr();
        }
        energy - s
    };
    let mut best = (f64::INFINITY, vec![]);
    match j {
        2 => {
            for i in 0..=steps {
                let idx = [i, steps - i];
                let v = value(&idx);
                if v < best.0 {
                    best = (v, idx.to_vec());
                }
            }
        }
        3 => {
            // θ_3 = -θ_1 - θ_2 sits at index 3·steps/2 - i - i'
            let total = 3 * steps / 2;
            for a in 0..=steps {
                for b in 0..=steps {
                    let Some(c) = total.checked_sub(a + b) else { continue };
                    if c > steps {
                        continue;
                    }
                    let idx = [a, b, c];
                    let v = value(&idx);
                    if v < best.0 {
                        best = (v, idx.to_vec());
                    }
                }
            }
        }
        _ => panic!("grid search only for J = 2 or 3"),
    }
    let theta = best.1.iter().map(|&i| -0.5 + i as f64 * h).collect();
    (best.0, theta)
}

fn brute_force_check() -> CheckResult {
    let h = 2e-4;
    let template = sin_cos();
    let density = ShiftDensitySpec::uniform(0.2).unwrap();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_abs = 0.0f64;
    let mut failures = 0;
    let mut cases = 0;
    for &j in &[2usize, 3] {
        for &sigma in &[0.0, 0.1] {
            for rep in 0..3u64 {
                let seed = 800 + 10 * j as u64 + rep + if sigma > 0.0 { 100 } else { 0 };
                let shifts = sample_shifts(j, &density, seed).unwrap();
                let z = vec![ProcessRealization::zero(); j];
                let data = generate_dataset(&template, &shifts, &z, sigma, DesignGrid::new(256).unwrap(), seed).unwrap();
                let curves = dft_coeffs(&data, 7).unwrap();
                let res = estimate_shifts(&curves, &OptimizerOptions { seed, ..Default::default() }).unwrap();
                let (grid_value, _) = grid_minimum(&curves, h);
                let excess = res.criterion_value - grid_value;
                worst_excess = worst_excess.max(excess);
                worst_abs = worst_abs.max(excess.abs());
                cases += 1;
                if excess > 1e-6 {
                    failures += 1;
                }
            }
        }
    }
    verdict(
        failures == 0,
        format!(
            "{cases} instances (J=2,3; sigma=0,0.1), grid step {h}: max(M_hat - M_grid) = {worst_excess:.2e}, max |M_hat - M_grid| = {worst_abs:.2e}"
        ),
    )
}

fn sampler_fidelity() -> CheckResult {
    let spec = StationaryCovSpec { scale: 4.0, shape: 4.0 };
    let spectrum = StationarySpectrum::new(&spec, 256);
    let reps = 10_000;
    let lags = [0.0, 1.0 / 64.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0];
    let mut sums = vec![0.0; lags.len()];
    let mut sq = vec![0.0; lags.len()];
    for r in 0..reps {
        let z = sample_with_spectrum(&spectrum, 90_000 + r as u64);
        let z0 = z.eval(0.0);
        for (i, &tau) in lags.iter().enumerate() {
            let p = z0 * z.eval(tau);
            sums[i] += p;
            sq[i] += p * p;
        }
    }
    let n = reps as f64;
    let var = sums[0] / n;
    let var_ok = (var - 16.0).abs() <= 0.05 * 16.0;
    let mut worst_z = 0.0f64;
    for i in 1..lags.len() {
        let mean = sums[i] / n;
        let se = ((sq[i] / n - mean * mean) / n).sqrt();
        worst_z = worst_z.max((mean - spectrum.covariance(lags[i])).abs() / se);
    }
    verdict(
        var_ok && worst_z <= 5.0,
        format!("10^4 draws: Var Z(0) = {var:.3} (target 16 +- 5%), worst lag-covariance deviation {worst_z:.2} SE (limit 5)"),
    )
}

fn bound_properties() -> CheckResult {
    let sup = sup_derivative(&sin_cos());
    let fisher = fisher_info(&ShiftDensitySpec::raised_cosine(0.2).unwrap()).unwrap();
    let values: Vec<f64> = (5..=12)
        .map(|p| {
            van_trees_shift_bound(&BoundInputs {
                n: 1 << p,
                sigma: 2.0,
                sup_deriv: sup,
                fisher_g: fisher,
                mode: BoundMode::Sim,
            })
            .unwrap()
        })
        .collect();
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    let f1 = fisher_info(&ShiftDensitySpec::raised_cosine(0.1).unwrap()).unwrap();
    let ratio = f1 / fisher;
    // BoundInputs has no field for the number of curves, so J cannot enter.
    verdict(
        decreasing && (ratio - 4.0).abs() <= 1e-6,
        format!(
            "bound(n=32..4096) = {:.3e} .. {:.3e}, strictly decreasing: {decreasing}; no J input; I(0.1)/I(0.2) = {ratio:.9}",
            values[0],
            values[values.len() - 1]
        ),
    )
}

fn determinism() -> CheckResult {
    let cfg = experiment(Scenario::Sim);
    let bytes = |parallel: bool| {
        let records = run_experiment(&ExperimentConfig { parallel, ..cfg.clone() }).unwrap();
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        buf
    };
    let a = bytes(false);
    let b = bytes(false);
    let c = bytes(true);
    verdict(
        a == b && a == c,
        format!("serial/serial/parallel CSVs of {} bytes identical: {}", a.len(), a == b && a == c),
    )
}
