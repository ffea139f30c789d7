use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shiftreg::synthdata::{sample_with_spectrum, splitmix64, curve_seed};
use shiftreg::{
    dft_coeffs, estimate_shifts, generate_dataset, pattern_error, sample_nonstationary_process, sample_shifts,
    shift_error, DesignGrid, ErrorMode, ProcessRealization, StationarySpectrum,
};

use crate::config::{ExperimentConfig, Scenario};
use crate::HarnessError;

/// One Monte Carlo repetition of one `(n, J)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub rep: usize,
    pub seed: u64,
    /// `(1/J)‖θ̂ - (θ* - θ̄*𝟙)‖²`.
    #[serde(rename = "shift_err")]
    pub shift_error: f64,
    /// `‖f̂ - f(· - θ̄*)‖²`.
    #[serde(rename = "pattern_err")]
    pub pattern_error: f64,
    pub criterion: f64,
    pub converged: bool,
    pub ms: u64,
}

/// Seed of cell `(n, J, rep)`. Every coordinate is mixed in separately, so
/// changing the number of repetitions leaves earlier repetitions untouched.
pub fn cell_seed(master: u64, scenario: Scenario, n: usize, j: usize, rep: usize) -> u64 {
    [scenario.tag(), n as u64, j as u64, rep as u64]
        .iter()
        .fold(splitmix64(master), |h, &x| splitmix64(h ^ x))
}

/// Perturbation draws for one cell; `spectrum` is required for the
/// stationary scenario.
fn processes(
    cfg: &ExperimentConfig,
    spectrum: Option<&StationarySpectrum>,
    j: usize,
    seed: u64,
) -> Result<Vec<ProcessRealization>, String> {
    (0..j)
        .map(|i| {
            let s = curve_seed(seed, i);
            match cfg.scenario {
                Scenario::Sim => Ok(ProcessRealization::zero()),
                Scenario::Stationary => Ok(sample_with_spectrum(spectrum.ok_or("missing spectrum")?, s)),
                Scenario::Nonstationary => sample_nonstationary_process(&cfg.nonstationary_spec(), s).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// Runs a single cell. Optimizer non-convergence is reported through the
/// record; anything else is an error.
pub fn run_cell(
    cfg: &ExperimentConfig,
    spectrum: Option<&StationarySpectrum>,
    n: usize,
    j: usize,
    rep: usize,
) -> Result<ErrorRecord, HarnessError> {
    let fail = |message: String| HarnessError::Cell { n, j, rep, message };
    let start = Instant::now();
    let seed = cell_seed(cfg.seed, cfg.scenario, n, j, rep);
    let template = cfg.template_coeffs()?;
    let density = cfg.density_spec()?;
    let grid = DesignGrid::new(n).map_err(|e| fail(e.to_string()))?;
    let shifts = sample_shifts(j, &density, seed).map_err(|e| fail(e.to_string()))?;
    let z = processes(cfg, spectrum, j, seed).map_err(fail)?;
    let data = generate_dataset(&template, &shifts, &z, cfg.sigma(), grid, seed).map_err(|e| fail(e.to_string()))?;
    let curves = dft_coeffs(&data, cfg.lambda).map_err(|e| fail(e.to_string()))?;
    let mut opts = cfg.optimizer.clone();
    opts.seed ^= seed;
    let result = estimate_shifts(&curves, &opts).map_err(|e| fail(e.to_string()))?;
    let shift_err = shift_error(&result.theta_hat, &shifts, ErrorMode::Centered).map_err(|e| fail(e.to_string()))?;
    let pattern_err = pattern_error(&result.frechet_mean, &template, shifts.mean());
    Ok(ErrorRecord {
        scenario: cfg.scenario,
        n,
        j,
        rep,
        seed,
        shift_error: shift_err,
        pattern_error: pattern_err,
        criterion: result.criterion_value,
        converged: result.converged,
        ms: if cfg.record_timing { start.elapsed().as_millis() as u64 } else { 0 },
    })
}

/// Runs every `(n, J, rep)` cell and returns the records sorted by
/// `(n, J, rep)`, independent of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ErrorRecord>, HarnessError> {
    cfg.validate()?;
    let mut spectra = BTreeMap::new();
    if cfg.scenario == Scenario::Stationary {
        for &n in &cfg.n_list {
            spectra
                .entry(n)
                .or_insert_with(|| StationarySpectrum::new(&cfg.stationary_spec(), cfg.harmonics(n)));
        }
    }
    let mut cells = Vec::new();
    for &n in &cfg.n_list {
        for &j in &cfg.j_list {
            for rep in 0..cfg.repetitions {
                cells.push((n, j, rep));
            }
        }
    }
    cells.sort_unstable();
    cells.dedup();
    let run = |&(n, j, rep): &(usize, usize, usize)| run_cell(cfg, spectra.get(&n), n, j, rep);
    let mut records: Vec<ErrorRecord> = if cfg.parallel {
        cells.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        cells.iter().map(run).collect::<Result<_, _>>()?
    };
    records.sort_by_key(|r| (r.n, r.j, r.rep));
    let stalled = records.iter().filter(|r| !r.converged).count();
    if stalled > 0 {
        log::warn!("{stalled} of {} cells stopped before meeting the gradient tolerance", records.len());
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scenario: Scenario) -> ExperimentConfig {
        ExperimentConfig {
            scenario,
            n_list: vec![64, 128],
            j_list: vec![4, 6],
            repetitions: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let mut seen = std::collections::HashSet::new();
        for rep in 0..20 {
            assert!(seen.insert(cell_seed(0, Scenario::Sim, 512, 20, rep)));
        }
        assert!(seen.insert(cell_seed(0, Scenario::Stationary, 512, 20, 0)));
        assert!(seen.insert(cell_seed(1, Scenario::Sim, 512, 20, 0)));
        assert_eq!(cell_seed(7, Scenario::Sim, 64, 3, 2), cell_seed(7, Scenario::Sim, 64, 3, 2));
    }

    #[test]
    fn noiseless_sim_recovers_shifts() {
        let cfg = ExperimentConfig {
            sigma: Some(0.0),
            repetitions: 1,
            ..small(Scenario::Sim)
        };
        let records = run_experiment(&cfg).unwrap();
        assert_eq!(records.len(), 4);
        for r in &records {
            assert!(r.shift_error <= 1e-8, "{r:?}");
        }
    }

    #[test]
    fn record_bookkeeping() {
        for s in [Scenario::Sim, Scenario::Stationary, Scenario::Nonstationary] {
            let records = run_experiment(&small(s)).unwrap();
            assert_eq!(records.len(), 2 * 2 * 3);
            for r in &records {
                assert!(r.shift_error.is_finite() && r.shift_error >= 0.0);
                assert!(r.pattern_error.is_finite() && r.pattern_error >= 0.0);
                assert_eq!(r.ms, 0);
                assert_eq!(r.scenario, s);
            }
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let cfg = small(Scenario::Stationary);
        let serial = run_experiment(&ExperimentConfig { parallel: false, ..cfg.clone() }).unwrap();
        assert_eq!(serial, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn fewer_repetitions_keep_prefix() {
        let cfg = small(Scenario::Sim);
        let all = run_experiment(&cfg).unwrap();
        let fewer = run_experiment(&ExperimentConfig { repetitions: 2, ..cfg }).unwrap();
        let kept: Vec<_> = all.into_iter().filter(|r| r.rep < 2).collect();
        assert_eq!(kept, fewer);
    }

    #[test]
    fn minimal_cell_does_not_panic() {
        for s in [Scenario::Sim, Scenario::Stationary, Scenario::Nonstationary] {
            let cfg = ExperimentConfig {
                scenario: s,
                n_list: vec![3],
                j_list: vec![2],
                lambda: 1,
                repetitions: 2,
                ..ExperimentConfig::default()
            };
            let records = run_experiment(&cfg).unwrap();
            assert_eq!(records.len(), 2);
        }
    }
}
