mod common;

use std::sync::Arc;

use common::{cosine_family, dopri5_propagator, line_grid, rotating_2x2, rotating_4x4, simpson};
use timeavg::evolution::{
    check_s_derivative, levi_evolution, levi_evolution_with, matrix_exponential, probe_derivative_bound, LeviOptions,
    ModePropagator, SpectralPropagator,
};
use timeavg::harness::{run_linear_sweep, run_nonlinear_sweep, Perturbation, Scenario, SolverSpec, SweepOptions};
use timeavg::mild::NonlinearForcing;
use timeavg::operator::{Coefficient, ForcingFamily};
use timeavg::profile::SpatialProfile;
use timeavg::spectral::Field;

#[test]
fn levi_matches_ode_on_rotating_families() {
    for family in [rotating_2x2(), rotating_4x4()] {
        let f = family.clone();
        let oracle = dopri5_propagator(move |r| f.eval(r).unwrap(), family.dim(), 0.2, 1.7, 1e-11);
        let u = levi_evolution(&family, 0.2, 1.7, 1e-10).unwrap();
        assert!((u - oracle).amax() < 1e-8);
    }
}

#[test]
fn levi_on_constant_family_is_exponential() {
    let a = rotating_2x2().eval(0.7).unwrap();
    let a2 = a.clone();
    let family = timeavg::evolution::MatrixFamily::new(2, 1.0, move |_| a2.clone()).unwrap();
    let out = levi_evolution_with(&family, 0.0, 1.0, 1e-12, &LeviOptions::default()).unwrap();
    assert!((out.u - matrix_exponential(&a, 1.0).unwrap()).amax() < 1e-12);
}

#[test]
fn backward_derivative_identity() {
    let family = rotating_4x4();
    let defect = check_s_derivative(&family, 0.5, 1.5, 1e-10).unwrap();
    assert!(defect < 1e-5, "{defect}");
}

#[test]
fn derivative_probe_stays_bounded() {
    let family = rotating_2x2();
    let gaps = [1e-3, 1e-2, 1e-1, 1.0];
    let samples = probe_derivative_bound(&family, 0.0, &gaps, 1e-10).unwrap();
    assert!(samples.iter().all(|s| s.value.is_finite() && s.value < 3.0));
}

#[test]
fn spectral_mode_factor_matches_quadrature() {
    let grid = line_grid(16);
    let prop = SpectralPropagator::new(cosine_family(1.0), grid.clone(), 0.3).unwrap();
    let factors = prop.mode_factors(0.4, 2.1).unwrap();
    for (m, f) in factors.iter().enumerate() {
        let xi = grid.frequency(m)[0];
        let integral = simpson(|r| (2.0 + (r / 0.3).cos()) * xi * xi + 1.0, 0.4, 2.1, 4000);
        assert!((f - (-integral).exp()).abs() <= 1e-10 * f.max(1e-300).max((-integral).exp()) + 1e-300);
    }
}

fn sweep_scenario() -> Scenario {
    let grid = line_grid(32);
    Scenario {
        initial: Field::from_real_fn(&grid, |x| x[0].cos() + 0.2 * (2.0 * x[0]).sin()),
        grid,
        family: cosine_family(1.0),
        forcing: None,
        perturbation: Perturbation::None,
        lambdas: vec![0.5, 0.25, 0.125, 0.0625],
        horizon: 1.0,
        delta: 0.1,
        alpha: 0.5,
        solver: SolverSpec::default(),
        seed: 11,
    }
}

#[test]
fn sweep_is_independent_of_thread_count() {
    let sc = sweep_scenario();
    let one = run_linear_sweep(&sc, &SweepOptions { jobs: 1, force: false }).unwrap();
    let many = run_linear_sweep(&sc, &SweepOptions { jobs: 4, force: false }).unwrap();
    assert_eq!(one, many);
}

#[test]
fn zero_forcing_matches_linear_sweep() {
    let linear = run_linear_sweep(&sweep_scenario(), &SweepOptions::default()).unwrap();
    let mut sc = sweep_scenario();
    sc.forcing = Some(NonlinearForcing::pure(
        ForcingFamily::Separable {
            time: Coefficient::Constant(0.0),
            space: SpatialProfile::Zero,
        },
        None,
    ));
    let nonlinear = run_nonlinear_sweep(&sc, &SweepOptions::default()).unwrap();
    for (a, b) in linear.runs.iter().zip(&nonlinear.runs) {
        for (ra, rb) in a.table.iter().zip(&b.table) {
            assert!((ra.error - rb.error).abs() < 1e-12);
        }
    }
}

#[test]
fn inconsistent_declaration_blocks_sweep_unless_forced() {
    let mut sc = sweep_scenario();
    sc.family = Arc::new(timeavg::operator::CoefficientFamily::scalar(
        Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
        Coefficient::Constant(1.0),
        common::declared(2.0, 1.0, 1.0),
    ));
    let err = run_linear_sweep(&sc, &SweepOptions::default()).unwrap_err();
    assert!(err.to_string().contains("ellipticity"), "{err}");
    let forced = run_linear_sweep(&sc, &SweepOptions { jobs: 0, force: true }).unwrap();
    assert!(forced.notes.iter().any(|n| n.contains("ellipticity")));
}

#[test]
fn oscillatory_forcing_error_decreases() {
    let mut sc = sweep_scenario();
    sc.forcing = Some(NonlinearForcing::pure(
        ForcingFamily::Separable {
            time: Coefficient::cosine(0.0, 1.0, 1.0, 0.0),
            space: SpatialProfile::single_mode(vec![1], 1.0),
        },
        None,
    ));
    let report = run_nonlinear_sweep(&sc, &SweepOptions::default()).unwrap();
    let first = report.runs.first().unwrap().sup_delta;
    let last = report.runs.last().unwrap().sup_delta;
    assert!(last < first);
    assert!(report.non_monotone_pairs <= 1);
}
