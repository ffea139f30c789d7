//! Van Trees lower bounds on the risk `E[(1/J)‖θ̂ - θ*‖²]` of any shift
//! estimator, and the quantities they are built from.
//!
//! None of the bounds takes the number of curves as input: they hold for
//! every `J`, so adding curves at fixed `n` cannot push the risk below them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FourierTemplate, ShiftDensitySpec};
use crate::quadrature::adaptive_simpson;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("Fisher information undefined for non-differentiable density (the prior must be C1 and vanish at its support boundary)")]
    NonDifferentiableDensity,
    #[error("density has empty support (half-width {0})")]
    DegenerateDensity(f64),
    #[error("Fisher information quadrature did not stabilize: {coarse} vs {fine}")]
    QuadratureUnstable { coarse: f64, fine: f64 },
    #[error("invalid bound inputs: {0}")]
    InvalidInputs(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum BoundMode {
    Sim,
    /// Stationary perturbation; `gamma = ∫|R|` is carried for reference only.
    Stationary { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub sigma: f64,
    /// `‖∂_t f‖_∞`.
    pub sup_deriv: f64,
    /// `I(g) = ∫ (∂_θ log g)² g dθ`.
    pub fisher_g: f64,
    pub mode: BoundMode,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<(), BoundError> {
        let bad = |m: &str| Err(BoundError::InvalidInputs(m.to_string()));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be finite and non-negative");
        }
        if !(self.sup_deriv > 0.0 && self.sup_deriv.is_finite()) {
            return bad("sup_deriv must be positive");
        }
        if !(self.fisher_g >= 0.0 && self.fisher_g.is_finite()) {
            return bad("fisher_g must be finite and non-negative");
        }
        Ok(())
    }
}

/// `sup_t |f'(t)|`: dense grid scan followed by golden-section refinement
/// around the best grid points.
pub fn sup_derivative(template: &FourierTemplate) -> f64 {
    let deriv = template.derivative();
    if deriv.norm_sq() == 0.0 {
        return 0.0;
    }
    let m = (256 * deriv.max_freq()).max(1024);
    let h = 1.0 / m as f64;
    let abs_d = |t: f64| deriv.eval(t).abs();
    let values: Vec<f64> = (0..m).map(|i| abs_d(i as f64 * h)).collect();
    let mut best = values.iter().cloned().fold(0.0, f64::max);
    // refine every local maximum of the scan that is close to the best value
    for i in 0..m {
        let (prev, next) = (values[(i + m - 1) % m], values[(i + 1) % m]);
        if values[i] >= prev && values[i] >= next && values[i] >= 0.9 * best {
            let t = i as f64 * h;
            best = best.max(golden_max(&abs_d, t - h, t + h));
        }
    }
    best
}

fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() < 1e-15 {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(0.5 * (a + b)))
}

/// Integrand `(g')² / g` of the Fisher information. For the raised cosine it
/// simplifies to `(π²/ρ³) sin²(πθ/2ρ)`, which is finite up to the endpoints.
fn fisher_integrand(density: &ShiftDensitySpec, theta: f64) -> Option<f64> {
    let r = density.half_width;
    match density.kind {
        crate::model::DensityKind::Uniform => None,
        crate::model::DensityKind::RaisedCosine => {
            if theta.abs() >= r {
                // limit of (g')²/g at the boundary
                return Some(PI * PI / (r * r * r));
            }
            let g = density.pdf(theta);
            let dg = density.pdf_derivative(theta)?;
            if g > 1e-300 && g * r > 1e-12 {
                Some(dg * dg / g)
            } else {
                Some(PI * PI / (r * r * r) * (PI * theta / (2.0 * r)).sin().powi(2))
            }
        }
    }
}

/// `I(g) = ∫ (∂_θ log g)² g dθ` by adaptive quadrature; two tolerance levels
/// must agree to relative 1e-6.
pub fn fisher_info(density: &ShiftDensitySpec) -> Result<f64, BoundError> {
    if !density.is_differentiable() {
        return Err(BoundError::NonDifferentiableDensity);
    }
    let r = density.half_width;
    if !(r > 0.0) {
        return Err(BoundError::DegenerateDensity(r));
    }
    let f = |t: f64| fisher_integrand(density, t).unwrap_or(f64::NAN);
    let scale = 1.0 / (r * r);
    let coarse = adaptive_simpson(f, -r, r, 1e-8 * scale);
    let fine = adaptive_simpson(f, -r, r, 1e-11 * scale);
    if !((coarse - fine).abs() <= 1e-6 * fine.abs()) {
        return Err(BoundError::QuadratureUnstable { coarse, fine });
    }
    Ok(fine)
}

/// `(σ²/n) / (‖f'‖²_∞ + (σ²/n) I(g))`.
pub fn van_trees_shift_bound(inputs: &BoundInputs) -> Result<f64, BoundError> {
    inputs.validate()?;
    Ok(bound_formula(inputs, inputs.sup_deriv * inputs.sup_deriv))
}

/// Same algebra with a caller-supplied `C(Θ, f)` in place of `‖f'‖²_∞`.
pub fn van_trees_sim_bound(inputs: &BoundInputs, c_theta_f: f64) -> Result<f64, BoundError> {
    inputs.validate()?;
    if !(c_theta_f > 0.0 && c_theta_f.is_finite()) {
        return Err(BoundError::InvalidInputs(format!("C(Θ,f) must be positive, got {c_theta_f}")));
    }
    Ok(bound_formula(inputs, c_theta_f))
}

fn bound_formula(inputs: &BoundInputs, c: f64) -> f64 {
    let v = inputs.sigma * inputs.sigma / inputs.n as f64;
    if v == 0.0 {
        return 0.0;
    }
    v / (c + v * inputs.fisher_g)
}
