//! Domain types shared by every stage of the pipeline: the design grid,
//! periodic functions stored by their Fourier coefficients, shift vectors,
//! observation matrices and shift densities.
//!
//! All functions live on the unit circle `[0, 1)`. A [`FourierTemplate`]
//! holds the coefficients `c_k = ∫ f(t) e^{-i2πkt} dt` for `|k| <= max_freq`,
//! so translations, L² distances and off-grid evaluation are all exact.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used when checking Hermitian symmetry of user supplied coefficients.
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("design grid needs at least 3 points, got {0}")]
    GridTooSmall(usize),
    #[error("coefficients are not Hermitian at frequency {k}: c_k = {ck}, c_-k = {cmk}")]
    NotHermitian {
        k: i64,
        ck: Complex64,
        cmk: Complex64,
    },
    #[error("coefficient vector must have odd length, got {0}")]
    EvenCoefficientLength(usize),
    #[error("shift vector must contain at least one value")]
    EmptyShifts,
    #[error("shift {index} = {value} lies outside [-1/2, 1/2]")]
    ShiftOutOfRange { index: usize, value: f64 },
    #[error("shift vector contains a non-finite value at {0}")]
    NonFiniteShift(usize),
    #[error("shift density half-width must lie in [0, 1/2), got {0}")]
    BadHalfWidth(f64),
    #[error("observation matrix row {row} has length {len}, expected {expected}")]
    RaggedRows {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("unknown template name `{0}`")]
    UnknownTemplate(String),
}

/// `e^{i2πx}` with the argument reduced modulo one first, so large `k·θ`
/// products keep full precision.
#[inline]
pub fn cis_turns(x: f64) -> Complex64 {
    let r = x - x.round();
    let (s, c) = (2.0 * PI * r).sin_cos();
    Complex64::new(c, s)
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

pub(crate) fn plan_fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Equispaced design `t_ℓ = ℓ/n`, `ℓ = 1..=n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignGrid {
    n: usize,
}

impl DesignGrid {
    pub fn new(n: usize) -> Result<Self, ModelError> {
        if n < 3 {
            return Err(ModelError::GridTooSmall(n));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Position of design point `ℓ` (1-based).
    pub fn point(&self, ell: usize) -> f64 {
        ell as f64 / self.n as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.n).map(move |l| self.point(l))
    }
}

/// A real periodic function given by its Fourier coefficients.
///
/// Coefficients are stored densely for `k = -K..=K`; `K` is always the
/// largest frequency with a non-zero coefficient (zero for the null function).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTemplate {
    coeffs: Vec<Complex64>,
}

impl FourierTemplate {
    pub fn zero() -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0)],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coeffs: vec![Complex64::new(c, 0.0)],
        }
    }

    /// `f(t) = 9 sin(2πt) + 2 cos(8πt)`: `c_{±1} = ∓4.5i`, `c_{±4} = 1`.
    pub fn sin_cos() -> Self {
        let mut pos = vec![Complex64::new(0.0, 0.0); 4];
        pos[0] = Complex64::new(0.0, -4.5);
        pos[3] = Complex64::new(1.0, 0.0);
        Self::from_positive(0.0, &pos)
    }

    /// Looks up a built-in template by name.
    pub fn builtin(name: &str) -> Result<Self, ModelError> {
        match name {
            "paper" | "sin-cos" => Ok(Self::sin_cos()),
            "cos" => Ok(Self::from_positive(0.0, &[Complex64::new(0.5, 0.0)])),
            "zero" => Ok(Self::zero()),
            other => Err(ModelError::UnknownTemplate(other.to_string())),
        }
    }

    /// Builds a real function from `c_0` and `c_1, ..., c_K`; negative
    /// frequencies are filled in by conjugation.
    pub fn from_positive(c0: f64, positive: &[Complex64]) -> Self {
        let k = positive.len();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); 2 * k + 1];
        coeffs[k] = Complex64::new(c0, 0.0);
        for (i, c) in positive.iter().enumerate() {
            coeffs[k + i + 1] = *c;
            coeffs[k - i - 1] = c.conj();
        }
        Self::trimmed(coeffs)
    }

    /// Builds from a dense vector indexed `k + K` for `k = -K..=K`, checking
    /// Hermitian symmetry.
    pub fn from_dense(coeffs: Vec<Complex64>) -> Result<Self, ModelError> {
        if coeffs.len() % 2 == 0 {
            return Err(ModelError::EvenCoefficientLength(coeffs.len()));
        }
        let k_max = (coeffs.len() / 2) as i64;
        for k in 0..=k_max {
            let ck = coeffs[(k_max + k) as usize];
            let cmk = coeffs[(k_max - k) as usize];
            let scale = 1.0f64.max(ck.norm());
            if (ck - cmk.conj()).norm() > HERMITIAN_TOL * scale {
                return Err(ModelError::NotHermitian { k, ck, cmk });
            }
        }
        // Symmetrize exactly so downstream real parts are clean.
        let mut coeffs = coeffs;
        let mid = k_max as usize;
        coeffs[mid].im = 0.0;
        for k in 1..=mid {
            let avg = (coeffs[mid + k] + coeffs[mid - k].conj()) * 0.5;
            coeffs[mid + k] = avg;
            coeffs[mid - k] = avg.conj();
        }
        Ok(Self::trimmed(coeffs))
    }

    /// Builds from `(k, c_k)` pairs. Every listed frequency must come with its
    /// conjugate partner.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (i64, Complex64)>,
    {
        let pairs: Vec<(i64, Complex64)> = pairs.into_iter().collect();
        let k_max = pairs.iter().map(|(k, _)| k.unsigned_abs()).max().unwrap_or(0) as usize;
        let mut dense = vec![Complex64::new(0.0, 0.0); 2 * k_max + 1];
        for (k, c) in pairs {
            dense[(k + k_max as i64) as usize] += c;
        }
        Self::from_dense(dense)
    }

    fn trimmed(mut coeffs: Vec<Complex64>) -> Self {
        let mut k = coeffs.len() / 2;
        while k > 0 && coeffs[0] == Complex64::new(0.0, 0.0) && coeffs[2 * k] == Complex64::new(0.0, 0.0) {
            coeffs.pop();
            coeffs.remove(0);
            k -= 1;
        }
        Self { coeffs }
    }

    /// Largest frequency carrying a non-zero coefficient.
    pub fn max_freq(&self) -> usize {
        self.coeffs.len() / 2
    }

    /// Coefficient `c_k`, zero outside the stored band.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let kmax = self.max_freq() as i64;
        if k.abs() > kmax {
            Complex64::new(0.0, 0.0)
        } else {
            self.coeffs[(k + kmax) as usize]
        }
    }

    /// Dense coefficients for `k = -K..=K`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let kmax = self.max_freq() as i64;
        self.coeffs.iter().enumerate().map(move |(i, c)| (i as i64 - kmax, *c))
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.iter().map(|(k, c)| (c * cis_turns(k as f64 * t)).re).sum()
    }

    /// `‖f‖²_{L²} = Σ |c_k|²`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// `Σ (1 + k²)^s |c_k|²`; membership in the Sobolev ball of radius `A`
    /// means this is below `A`.
    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.iter()
            .map(|(k, c)| (1.0 + (k * k) as f64).powf(s) * c.norm_sqr())
            .sum()
    }

    pub fn in_sobolev_ball(&self, s: f64, radius: f64) -> bool {
        self.sobolev_norm_sq(s) < radius
    }

    /// `t ↦ f(t - θ)`, i.e. `c_k ↦ c_k e^{-i2πkθ}`.
    pub fn shifted(&self, theta: f64) -> Self {
        let coeffs = self
            .iter()
            .map(|(k, c)| c * cis_turns(-(k as f64) * theta))
            .collect();
        Self { coeffs }
    }

    /// First derivative, `c_k ↦ i2πk c_k`.
    pub fn derivative(&self) -> Self {
        let coeffs = self
            .iter()
            .map(|(k, c)| c * Complex64::new(0.0, 2.0 * PI * k as f64))
            .collect();
        Self::trimmed(coeffs)
    }

    /// Pointwise sum of two functions.
    pub fn add(&self, other: &Self) -> Self {
        let kmax = self.max_freq().max(other.max_freq()) as i64;
        let coeffs = (-kmax..=kmax).map(|k| self.coeff(k) + other.coeff(k)).collect();
        Self::trimmed(coeffs)
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self::trimmed(self.coeffs.iter().map(|c| c * a).collect())
    }

    /// Values `f(ℓ/n - θ)` for `ℓ = 1..=n`, computed by an inverse FFT of
    /// the phase-rotated coefficients folded onto the `n` grid bins. Folding
    /// is exact on the grid, so there is no aliasing error.
    pub fn sample_on_grid(&self, grid: &DesignGrid, theta: f64) -> Vec<f64> {
        let n = grid.n();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for (k, c) in self.iter() {
            let bin = k.rem_euclid(n as i64) as usize;
            buf[bin] += c * cis_turns(-(k as f64) * theta);
        }
        plan_fft(n, true).process(&mut buf);
        (1..=n).map(|l| buf[l % n].re).collect()
    }
}

pub fn eval_template(template: &FourierTemplate, t: f64) -> f64 {
    template.eval(t)
}

/// `Σ_k |a_k - b_k|²`, the squared L² distance by Parseval.
pub fn l2_distance_sq(a: &FourierTemplate, b: &FourierTemplate) -> f64 {
    let kmax = a.max_freq().max(b.max_freq()) as i64;
    (-kmax..=kmax).map(|k| (a.coeff(k) - b.coeff(k)).norm_sqr()).sum()
}

pub fn shift_template(template: &FourierTemplate, theta: f64) -> FourierTemplate {
    template.shifted(theta)
}

/// Shift parameters, one per curve, in units of the period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ShiftVector {
    values: Vec<f64>,
}

impl ShiftVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyShifts);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFiniteShift(index));
            }
            if value.abs() > 0.5 {
                return Err(ModelError::ShiftOutOfRange { index, value });
            }
        }
        Ok(Self { values })
    }

    pub fn zeros(j: usize) -> Self {
        Self {
            values: vec![0.0; j.max(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    /// `θ - θ̄ 𝟙`, the representative in the zero-sum set.
    pub fn centered(&self) -> Result<Self, ModelError> {
        let m = self.mean();
        Self::new(self.values.iter().map(|v| v - m).collect())
    }

    /// `θ - θ_1 𝟙`, the representative with the first curve as reference.
    pub fn anchored_to_first(&self) -> Result<Self, ModelError> {
        let first = self.values[0];
        Self::new(self.values.iter().map(|v| v - first).collect())
    }

    pub fn is_centered(&self, tol: f64) -> bool {
        self.values.iter().sum::<f64>().abs() <= tol
    }
}

impl TryFrom<Vec<f64>> for ShiftVector {
    type Error = ModelError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ShiftVector> for Vec<f64> {
    fn from(s: ShiftVector) -> Self {
        s.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    Uniform,
    RaisedCosine,
}

/// Density of the random shifts, supported on `[-ρ', ρ']`.
///
/// The raised cosine `g(θ) = cos²(πθ/2ρ')/ρ'` is smooth and vanishes at the
/// support boundary, so its Fisher information is finite. The uniform law is
/// kept for simulation only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftDensitySpec {
    pub kind: DensityKind,
    pub half_width: f64,
}

impl ShiftDensitySpec {
    pub fn new(kind: DensityKind, half_width: f64) -> Result<Self, ModelError> {
        let spec = Self { kind, half_width };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(half_width: f64) -> Result<Self, ModelError> {
        Self::new(DensityKind::Uniform, half_width)
    }

    pub fn raised_cosine(half_width: f64) -> Result<Self, ModelError> {
        Self::new(DensityKind::RaisedCosine, half_width)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.half_width >= 0.0 && self.half_width < 0.5) {
            return Err(ModelError::BadHalfWidth(self.half_width));
        }
        Ok(())
    }

    pub fn pdf(&self, theta: f64) -> f64 {
        let r = self.half_width;
        if theta.abs() > r || r == 0.0 {
            return 0.0;
        }
        match self.kind {
            DensityKind::Uniform => 0.5 / r,
            DensityKind::RaisedCosine => (PI * theta / (2.0 * r)).cos().powi(2) / r,
        }
    }

    /// `g'(θ)` on the open support; `None` where the density is not differentiable.
    pub fn pdf_derivative(&self, theta: f64) -> Option<f64> {
        let r = self.half_width;
        match self.kind {
            DensityKind::Uniform => None,
            DensityKind::RaisedCosine => {
                if theta.abs() >= r {
                    return Some(0.0);
                }
                let u = PI * theta / (2.0 * r);
                Some(-PI / (r * r) * u.sin() * u.cos())
            }
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        let r = self.half_width;
        if theta <= -r {
            return 0.0;
        }
        if theta >= r {
            return 1.0;
        }
        match self.kind {
            DensityKind::Uniform => (theta + r) / (2.0 * r),
            DensityKind::RaisedCosine => {
                (theta + r) / (2.0 * r) + (PI * theta / r).sin() / (2.0 * PI)
            }
        }
    }

    /// Inverse CDF by bisection, accurate to a few ulps of `ρ'`.
    pub fn quantile(&self, p: f64) -> f64 {
        let r = self.half_width;
        if r == 0.0 {
            return 0.0;
        }
        match self.kind {
            DensityKind::Uniform => -r + 2.0 * r * p,
            DensityKind::RaisedCosine => {
                let (mut lo, mut hi) = (-r, r);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let p: f64 = rng.random();
        self.quantile(p).clamp(-self.half_width, self.half_width)
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self.kind, DensityKind::RaisedCosine)
    }
}

impl std::str::FromStr for ShiftDensitySpec {
    type Err = String;

    /// Parses `uniform:0.2` or `raised-cosine:0.2`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, width) = s
            .split_once(':')
            .ok_or_else(|| format!("expected KIND:HALF_WIDTH, got `{s}`"))?;
        let kind = match kind {
            "uniform" => DensityKind::Uniform,
            "raised-cosine" | "raised_cosine" => DensityKind::RaisedCosine,
            other => return Err(format!("unknown density kind `{other}`")),
        };
        let half_width: f64 = width
            .parse()
            .map_err(|e| format!("bad half-width `{width}`: {e}"))?;
        Self::new(kind, half_width).map_err(|e| e.to_string())
    }
}

/// Ground truth attached to a simulated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub shifts: ShiftVector,
    pub template: FourierTemplate,
    pub sigma: f64,
    pub processes: Vec<FourierTemplate>,
}

/// `J × n` matrix of observations `Y_j^ℓ` on a design grid.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<Vec<f64>>,
    grid: DesignGrid,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(y: Vec<Vec<f64>>, grid: DesignGrid) -> Result<Self, ModelError> {
        for (row, r) in y.iter().enumerate() {
            if r.len() != grid.n() {
                return Err(ModelError::RaggedRows {
                    row,
                    len: r.len(),
                    expected: grid.n(),
                });
            }
        }
        Ok(Self { y, grid, truth: None })
    }

    pub fn with_truth(mut self, truth: GroundTruth) -> Result<Self, ModelError> {
        if truth.shifts.len() != self.y.len() {
            return Err(ModelError::LengthMismatch {
                what: "truth shifts",
                got: truth.shifts.len(),
                expected: self.y.len(),
            });
        }
        self.truth = Some(truth);
        Ok(self)
    }

    pub fn curves(&self) -> usize {
        self.y.len()
    }

    pub fn grid(&self) -> &DesignGrid {
        &self.grid
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.y
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.y[j]
    }
}
