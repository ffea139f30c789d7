//! Seeded simulation of the shifted-curves model
//! `Y_j^ℓ = f(ℓ/n - θ_j) + Z_j(ℓ/n - θ_j) + σ ε_j^ℓ`.
//!
//! Every random quantity attached to curve `j` is drawn from a ChaCha8
//! generator seeded with `seed ^ splitmix64(j)`, on a stream reserved for
//! its role (shift, process, noise). A dataset with `J = 10` therefore
//! shares its first five curves with the `J = 5` dataset built from the
//! same master seed.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::{
    Dataset, DesignGrid, FourierTemplate, GroundTruth, ModelError, ShiftDensitySpec, ShiftVector,
};
use crate::quadrature::composite_gauss_rule;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Shift = 1,
    Process = 2,
    Noise = 3,
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for curve `j` (0-based) under a master seed.
pub fn curve_seed(master: u64, j: usize) -> u64 {
    master ^ splitmix64(j as u64)
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Draws `J` i.i.d. shifts from `density`.
pub fn sample_shifts(j: usize, density: &ShiftDensitySpec, seed: u64) -> Result<ShiftVector, ModelError> {
    density.validate()?;
    if j == 0 {
        return Err(ModelError::EmptyShifts);
    }
    let values = (0..j)
        .map(|idx| {
            let mut rng = rng_for(curve_seed(seed, idx), Stream::Shift);
            density.sample(&mut rng)
        })
        .collect();
    ShiftVector::new(values)
}

/// Stationary covariance on the circle,
/// `R(t) = ς² cosh(φ(t - 1/2)) / cosh(φ/2)` for `t ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryCovSpec {
    /// Standard-deviation scale `ς`.
    pub scale: f64,
    /// Shape `φ > 0`.
    pub shape: f64,
}

impl StationaryCovSpec {
    pub fn covariance(&self, t: f64) -> f64 {
        let t = t.rem_euclid(1.0);
        let phi = self.shape;
        let num = (phi * (t - 0.5)).exp() + (-phi * (t - 0.5)).exp();
        let den = (phi / 2.0).exp() + (-phi / 2.0).exp();
        self.scale * self.scale * num / den
    }

    /// Fourier coefficients `r_k = ∫_0^1 R(t) e^{-i2πkt} dt` for `k = 0..=K`
    /// by composite Gauss–Legendre quadrature. `R(t) = R(1 - t)` makes them real.
    pub fn spectral_masses(&self, k_max: usize) -> Vec<f64> {
        let panels = (4 * k_max).max(64);
        let (nodes, weights) = composite_gauss_rule(0.0, 1.0, panels, 8);
        let rw: Vec<f64> = nodes
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * self.covariance(*t))
            .collect();
        (0..=k_max)
            .map(|k| {
                nodes
                    .iter()
                    .zip(&rw)
                    .map(|(t, rw)| rw * (2.0 * PI * (k as f64 * t).fract()).cos())
                    .sum()
            })
            .collect()
    }

    /// `γ = ∫_0^1 |R(t)| dt`.
    pub fn gamma(&self) -> f64 {
        let (nodes, weights) = composite_gauss_rule(0.0, 1.0, 64, 8);
        nodes
            .iter()
            .zip(&weights)
            .map(|(t, w)| w * self.covariance(*t).abs())
            .sum()
    }
}

/// Amplitudes `a_k = sqrt(max(0, r_k))` for `k = 0..=K`, with the discarded
/// negative mass.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySpectrum {
    amplitudes: Vec<f64>,
    pub clipped_mass: f64,
}

impl StationarySpectrum {
    pub fn new(spec: &StationaryCovSpec, k_max: usize) -> Self {
        let masses = spec.spectral_masses(k_max);
        let mut clipped_mass = 0.0;
        let amplitudes = masses
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                if r < 0.0 {
                    clipped_mass += if k == 0 { -r } else { -2.0 * r };
                    0.0
                } else {
                    r.sqrt()
                }
            })
            .collect();
        if clipped_mass > 0.0 {
            let total: f64 = masses.iter().enumerate().map(|(k, r)| if k == 0 { r.abs() } else { 2.0 * r.abs() }).sum();
            log::info!(
                "clipped negative spectral mass {clipped_mass:.3e} ({:.3e} of total)",
                clipped_mass / total
            );
        }
        Self {
            amplitudes,
            clipped_mass,
        }
    }

    pub fn k_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    /// Covariance of the synthesized process at lag `tau`,
    /// `Σ_{|k|<=K} a_k² e^{i2πkτ}`.
    pub fn covariance(&self, tau: f64) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let w = if k == 0 { 1.0 } else { 2.0 };
                w * a * a * (2.0 * PI * (k as f64 * tau).fract()).cos()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProcessKind {
    Stationary,
    Nonstationary,
    Zero,
}

/// One sample path of the perturbation process `Z_j`, stored as a random
/// Fourier series so it can be evaluated off the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessRealization {
    pub kind: ProcessKind,
    pub path: FourierTemplate,
    /// Negative spectral mass discarded when building the sampler.
    pub clipped_mass: f64,
}

impl ProcessRealization {
    pub fn zero() -> Self {
        Self {
            kind: ProcessKind::Zero,
            path: FourierTemplate::zero(),
            clipped_mass: 0.0,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.path.eval(t)
    }
}

/// Draws `Z(t) = Σ_{|k|<=K} a_k ξ_k e^{i2πkt}` with Hermitian-paired standard
/// complex Gaussians `ξ_k` (`ξ_0` real).
pub fn sample_with_spectrum(spectrum: &StationarySpectrum, seed: u64) -> ProcessRealization {
    let mut rng = rng_for(seed, Stream::Process);
    let amps = spectrum.amplitudes();
    let xi0: f64 = StandardNormal.sample(&mut rng);
    let positive: Vec<Complex64> = amps[1..]
        .iter()
        .map(|a| {
            let u: f64 = StandardNormal.sample(&mut rng);
            let v: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(u, v) * (a / std::f64::consts::SQRT_2)
        })
        .collect();
    ProcessRealization {
        kind: ProcessKind::Stationary,
        path: FourierTemplate::from_positive(amps[0] * xi0, &positive),
        clipped_mass: spectrum.clipped_mass,
    }
}

pub fn sample_stationary_process(spec: &StationaryCovSpec, k_max: usize, seed: u64) -> ProcessRealization {
    let spectrum = StationarySpectrum::new(spec, k_max.max(1));
    sample_with_spectrum(&spectrum, seed)
}

/// Rank-one perturbation `Z(t) = α ψ(t)`, `α ~ N(0, ς²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NonstationarySpec {
    pub scale: f64,
    pub profile: FourierTemplate,
}

impl NonstationarySpec {
    /// `ψ(t) = sqrt(2/3) (1 + cos 2πt)`: smooth, unit L² norm, and positive
    /// except for a double zero at `t = 1/2`.
    pub fn default_profile() -> FourierTemplate {
        let a = (2.0f64 / 3.0).sqrt();
        FourierTemplate::from_positive(a, &[Complex64::new(0.5 * a, 0.0)])
    }

    pub fn with_default_profile(scale: f64) -> Self {
        Self {
            scale,
            profile: Self::default_profile(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let norm = self.profile.norm_sq().sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(SynthError::ProfileNorm(norm));
        }
        let m = 4096;
        if let Some(t) = (0..m).map(|i| i as f64 / m as f64).find(|t| self.profile.eval(*t) < -1e-12) {
            return Err(SynthError::ProfileNegative(t));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("profile must have unit L2 norm, got {0}")]
    ProfileNorm(f64),
    #[error("profile must be non-negative, found negative value at t = {0}")]
    ProfileNegative(f64),
    #[error("noise level must be finite and non-negative, got {0}")]
    BadSigma(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn sample_nonstationary_process(spec: &NonstationarySpec, seed: u64) -> Result<ProcessRealization, SynthError> {
    spec.validate()?;
    let mut rng = rng_for(seed, Stream::Process);
    let xi: f64 = StandardNormal.sample(&mut rng);
    Ok(ProcessRealization {
        kind: ProcessKind::Nonstationary,
        path: spec.profile.scaled(spec.scale * xi),
        clipped_mass: 0.0,
    })
}

/// Builds `Y_j^ℓ = f(ℓ/n - θ_j) + Z_j(ℓ/n - θ_j) + σ ε_j^ℓ` with exact
/// off-grid evaluation of `f + Z_j`.
pub fn generate_dataset(
    template: &FourierTemplate,
    shifts: &ShiftVector,
    processes: &[ProcessRealization],
    sigma: f64,
    grid: DesignGrid,
    seed: u64,
) -> Result<Dataset, SynthError> {
    if processes.len() != shifts.len() {
        return Err(ModelError::LengthMismatch {
            what: "processes",
            got: processes.len(),
            expected: shifts.len(),
        }
        .into());
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SynthError::BadSigma(sigma));
    }
    let rows: Vec<Vec<f64>> = shifts
        .as_slice()
        .iter()
        .zip(processes)
        .enumerate()
        .map(|(j, (&theta, z))| {
            let signal = template.add(&z.path);
            let mut row = signal.sample_on_grid(&grid, theta);
            if sigma > 0.0 {
                let mut rng = rng_for(curve_seed(seed, j), Stream::Noise);
                for y in row.iter_mut() {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    *y += sigma * e;
                }
            }
            row
        })
        .collect();
    let truth = GroundTruth {
        shifts: shifts.clone(),
        template: template.clone(),
        sigma,
        processes: processes.iter().map(|p| p.path.clone()).collect(),
    };
    Ok(Dataset::new(rows, grid)?.with_truth(truth)?)
}
