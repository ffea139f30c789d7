use num_complex::Complex64;
use proptest::prelude::*;
use shiftreg::smoothing::SmoothedCurves;
use shiftreg::synthdata::{curve_seed, sample_with_spectrum};
use shiftreg::*;

fn sim_curves(j: usize, n: usize, sigma: f64, seed: u64) -> (SmoothedCurves, ShiftVector) {
    let template = FourierTemplate::sin_cos();
    let shifts = sample_shifts(j, &ShiftDensitySpec::uniform(0.2).unwrap(), seed).unwrap();
    let z = vec![ProcessRealization::zero(); j];
    let data = generate_dataset(&template, &shifts, &z, sigma, DesignGrid::new(n).unwrap(), seed).unwrap();
    (dft_coeffs(&data, 7).unwrap(), shifts)
}

fn hermitian_rows(raw: &[Vec<(f64, f64)>], lambda: usize) -> SmoothedCurves {
    let rows = raw
        .iter()
        .map(|r| {
            let mut row = vec![Complex64::new(0.0, 0.0); 2 * lambda + 1];
            row[lambda] = Complex64::new(r[0].0, 0.0);
            for k in 1..=lambda {
                let c = Complex64::new(r[k].0, r[k].1);
                row[lambda + k] = c;
                row[lambda - k] = c.conj();
            }
            row
        })
        .collect();
    SmoothedCurves::from_rows(rows, lambda, DesignGrid::new(4 * lambda + 4).unwrap()).unwrap()
}

fn curves_strategy() -> impl Strategy<Value = (SmoothedCurves, Vec<f64>)> {
    (2usize..7, 1usize..6).prop_flat_map(|(j, lambda)| {
        (
            prop::collection::vec(prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), lambda + 1), j),
            prop::collection::vec(-0.4f64..0.4, j),
        )
            .prop_map(move |(raw, theta)| (hermitian_rows(&raw, lambda), theta))
    })
}

#[test]
fn dft_recovers_shifted_template_without_noise() {
    let template = FourierTemplate::sin_cos();
    let shifts = ShiftVector::new(vec![0.1, -0.03, 0.2]).unwrap();
    let z = vec![ProcessRealization::zero(); 3];
    let data = generate_dataset(&template, &shifts, &z, 0.0, DesignGrid::new(64).unwrap(), 1).unwrap();
    let curves = dft_coeffs(&data, 7).unwrap();
    for (j, &th) in shifts.as_slice().iter().enumerate() {
        for k in -7i64..=7 {
            let expected = template.coeff(k) * cis_turns(-(k as f64) * th);
            // the DFT sums over ℓ = 1..n, which is a full period
            assert!((curves.coeff(j, k) - expected).norm() < 1e-12, "j={j} k={k}");
        }
    }
}

#[test]
fn noisy_sim_estimates_are_close() {
    let (curves, shifts) = sim_curves(30, 512, 0.5, 3);
    let res = estimate_shifts(&curves, &OptimizerOptions::default()).unwrap();
    assert!(res.theta_hat.is_centered(1e-12));
    let err = shift_error(&res.theta_hat, &shifts, ErrorMode::Centered).unwrap();
    assert!(err < 1e-5, "shift error {err}");
    let pe = pattern_error(&res.frechet_mean, &FourierTemplate::sin_cos(), shifts.mean());
    assert!(pe < 1e-2, "pattern error {pe}");
    assert_eq!(res.multistart_values.len(), 5);
    assert!(res.multistart_values.iter().all(|v| *v >= res.criterion_value - 1e-12));
}

#[test]
fn stationary_pipeline_runs_end_to_end() {
    let spectrum = StationarySpectrum::new(&StationaryCovSpec { scale: 4.0, shape: 4.0 }, 128);
    let j = 10;
    let shifts = sample_shifts(j, &ShiftDensitySpec::uniform(0.2).unwrap(), 9).unwrap();
    let z: Vec<_> = (0..j).map(|i| sample_with_spectrum(&spectrum, curve_seed(9, i))).collect();
    let data =
        generate_dataset(&FourierTemplate::sin_cos(), &shifts, &z, 8.0, DesignGrid::new(256).unwrap(), 9).unwrap();
    let res = estimate_shifts(&dft_coeffs(&data, 7).unwrap(), &OptimizerOptions::default()).unwrap();
    assert!(res.criterion_value.is_finite());
    assert!(shift_error(&res.theta_hat, &shifts, ErrorMode::Centered).unwrap() < 0.01);
}

#[test]
fn bound_sits_below_observed_risk() {
    // a sanity relation, not a proof: estimator risk at σ = 2
    // is above the lower bound computed with a matching raised-cosine prior
    let (curves, shifts) = sim_curves(40, 512, 2.0, 11);
    let res = estimate_shifts(&curves, &OptimizerOptions::default()).unwrap();
    let err = shift_error(&res.theta_hat, &shifts, ErrorMode::Centered).unwrap();
    let b = van_trees_shift_bound(&BoundInputs {
        n: 512,
        sigma: 2.0,
        sup_deriv: sup_derivative(&FourierTemplate::sin_cos()),
        fisher_g: fisher_info(&ShiftDensitySpec::raised_cosine(0.2).unwrap()).unwrap(),
        mode: BoundMode::Sim,
    })
    .unwrap();
    assert!(b > 0.0 && b < err, "bound {b} vs error {err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn criterion_invariant_under_common_shift((curves, theta) in curves_strategy(), c in -0.05f64..0.05) {
        let moved: Vec<f64> = theta.iter().map(|t| t + c).collect();
        let a = criterion_m(&curves, &ShiftVector::new(theta).unwrap()).unwrap();
        let b = criterion_m(&curves, &ShiftVector::new(moved).unwrap()).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
    }

    #[test]
    fn gradient_sums_to_zero((curves, theta) in curves_strategy()) {
        let g = grad_m(&curves, &ShiftVector::new(theta).unwrap()).unwrap();
        let scale: f64 = g.iter().map(|x| x.abs()).sum::<f64>() + 1.0;
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-10 * scale);
    }

    #[test]
    fn criterion_is_non_negative_and_bounded_by_energy((curves, theta) in curves_strategy()) {
        let m = criterion_m(&curves, &ShiftVector::new(theta).unwrap()).unwrap();
        let energy: f64 = curves.rows().iter().flatten().map(|c| c.norm_sqr()).sum::<f64>() / curves.curves() as f64;
        prop_assert!(m >= -1e-12 && m <= energy + 1e-12);
    }

    #[test]
    fn estimate_is_feasible_and_no_worse_than_zero((curves, _theta) in curves_strategy()) {
        let opts = OptimizerOptions { multistarts: 2, ..Default::default() };
        let res = estimate_shifts(&curves, &opts).unwrap();
        prop_assert!(res.theta_hat.is_centered(1e-10));
        prop_assert!(res.theta_hat.as_slice().iter().all(|t| t.abs() <= 0.5));
        let at_zero = criterion_m(&curves, &ShiftVector::zeros(curves.curves())).unwrap();
        prop_assert!(res.criterion_value <= at_zero + 1e-12);
    }
}
