//! Estimation of a mean pattern from randomly shifted, noisy periodic curves.
//!
//! The pipeline is: sample curves ([`synthdata`]), smooth each curve by a
//! truncated DFT ([`smoothing`]), estimate the shifts by minimizing the
//! Fréchet-mean criterion ([`registration`]), and compare the resulting risk
//! with the Van Trees lower bounds ([`bounds`]).

pub mod bounds;
pub mod model;
pub mod quadrature;
pub mod registration;
pub mod smoothing;
pub mod synthdata;

pub use num_complex;

pub use bounds::{fisher_info, sup_derivative, van_trees_shift_bound, van_trees_sim_bound, BoundError, BoundInputs, BoundMode};
pub use model::{
    cis_turns, eval_template, l2_distance_sq, shift_template, Dataset, DensityKind, DesignGrid, FourierTemplate,
    GroundTruth, ModelError, ShiftDensitySpec, ShiftVector,
};
pub use registration::{
    criterion_d, criterion_m, estimate_shifts, frechet_mean, grad_m, pattern_error, shift_error, Constraint, ErrorMode,
    OptimizerOptions, RegistrationError, RegistrationResult,
};
pub use smoothing::{dft_coeffs, dft_coeffs_direct, smoothed_eval, SmoothedCurves, SmoothingError};
pub use synthdata::{
    generate_dataset, sample_nonstationary_process, sample_shifts, sample_stationary_process, NonstationarySpec,
    ProcessKind, ProcessRealization, StationaryCovSpec, StationarySpectrum, SynthError,
};
