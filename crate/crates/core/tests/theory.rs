use mhcov::proposals::{IncrementDensity, ProposalKernel};
use mhcov::quadrature::Scheme;
use mhcov::sampler::{run_chain, RunConfig};
use mhcov::theory::{cov_explicit1d, cov_general, cov_symrw_ordered, empirical_lag_cov, positivity_sweep, tail_moments, Order, QuadratureSpec};
use mhcov::TargetDensity;
use proptest::prelude::*;

fn target(k: u8) -> TargetDensity {
    match k % 3 {
        0 => TargetDensity::gaussian(0.0, 1.0),
        1 => TargetDensity::logistic(0.0, 1.0),
        _ => TargetDensity::ghs(1.5, 0.0, 1.0),
    }
    .unwrap()
}

#[test]
fn gaussian_rw_on_gaussian_by_brute_force() {
    // independent oracle: tensor midpoint rule on the covariance identity
    let t = target(0);
    let s = 1.3;
    let h = 0.01;
    let n = 1600;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut acc = 0.0;
    for i in 0..n {
        let x = -8.0 + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -8.0 + (j as f64 + 0.5) * h;
            acc += (x - y).powi(2) * phi((y - x) / s) / s * t.pdf(x).min(t.pdf(y));
        }
    }
    let brute = 1.0 - 0.5 * acc * h * h;
    let c = cov_explicit1d(&t, &IncrementDensity::gaussian(s).unwrap(), &QuadratureSpec::default()).unwrap();
    assert!((c.value - brute).abs() < 1e-6, "{} vs {brute}", c.value);
}

#[test]
fn integration_order_is_irrelevant() {
    let spec = QuadratureSpec::default();
    for k in 0..3 {
        for inc in [IncrementDensity::gaussian(0.7).unwrap(), IncrementDensity::bimodal(3.0, 0.6).unwrap()] {
            let a = cov_symrw_ordered(&target(k), &inc, &spec, Order::XThenY).unwrap().value;
            let b = cov_symrw_ordered(&target(k), &inc, &spec, Order::YThenX).unwrap().value;
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn translation_invariant_in_theory_and_simulation() {
    let spec = QuadratureSpec::default();
    let inc = IncrementDensity::bimodal(2.4, 0.5).unwrap();
    let k: ProposalKernel = inc.into();
    let base = TargetDensity::logistic(0.0, 1.0).unwrap();
    let c0 = cov_general(&base, &k, &spec).unwrap().value;
    let chain0 = run_chain(&base, &k, &RunConfig::new(100_000, 4)).unwrap();
    for mu in [3.0, -7.0] {
        let t = base.with_mu(mu).unwrap();
        assert!((cov_general(&t, &k, &spec).unwrap().value - c0).abs() < 1e-8);
        assert!((cov_explicit1d(&t, &inc, &spec).unwrap().value - c0).abs() < 1e-8);
        let chain = run_chain(&t, &k, &RunConfig::new(100_000, 4)).unwrap();
        for lag in [1, 2, 3] {
            let a = empirical_lag_cov(&chain0.states, lag).unwrap();
            let b = empirical_lag_cov(&chain.states, lag).unwrap();
            assert!((a - b).abs() < 1e-6, "lag {lag}: {a} vs {b}");
        }
    }
}

#[test]
fn vanishing_step_recovers_the_variance() {
    let spec = QuadratureSpec::default();
    for k in 0..3 {
        let t = target(k);
        let c = cov_explicit1d(&t, &IncrementDensity::gaussian(1e-6).unwrap(), &spec).unwrap().value;
        let v = t.variance().unwrap();
        assert!(c < v && v - c < 1e-8, "{t}: {c} vs {v}");
    }
}

#[test]
fn simpson_agrees_with_kronrod() {
    let gk = QuadratureSpec::default();
    let simpson = QuadratureSpec { scheme: Scheme::CompositeSimpson, ..QuadratureSpec::default() };
    for k in 0..3 {
        let inc = IncrementDensity::gaussian(2.0).unwrap();
        let a = cov_explicit1d(&target(k), &inc, &gk).unwrap().value;
        let b = cov_explicit1d(&target(k), &inc, &simpson).unwrap().value;
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn tail_moments_of_gaussian() {
    let t = target(0);
    let (mass, second) = tail_moments(&t, 3.0).unwrap();
    // P(|Z| > 3) and E[Z^2; |Z| > 3] = 2 (3 phi(3) + P(Z > 3))
    let sf3 = 0.5 * libm::erfc(3.0 / std::f64::consts::SQRT_2);
    let phi3 = (-4.5f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    assert!((mass - 2.0 * sf3).abs() < 1e-12);
    assert!((second - 2.0 * (3.0 * phi3 + sf3)).abs() < 1e-12);
}

#[test]
fn explicit_form_requires_symmetric_unimodal_target() {
    let grid: Vec<f64> = (0..201).map(|i| -5.0 + 0.05 * i as f64).collect();
    let lp: Vec<f64> = grid.iter().map(|&x: &f64| if x < 0.0 { -x * x } else { -2.0 * x * x }).collect();
    let t = TargetDensity::custom(grid, lp, false).unwrap();
    let inc = IncrementDensity::gaussian(1.0).unwrap();
    assert!(cov_explicit1d(&t, &inc, &QuadratureSpec::default()).is_err());
    let c = cov_general(&t, &inc.into(), &QuadratureSpec::default()).unwrap().value;
    assert!(c > 0.0);
}

#[test]
fn sweep_stays_positive() {
    let targets: Vec<TargetDensity> = (0..3).map(target).collect();
    let incs: Vec<IncrementDensity> = [0.1, 1.0, 5.0].iter().map(|&s| IncrementDensity::gaussian(s).unwrap())
        .chain([(2.0, 0.2), (4.0, 1.0)].iter().map(|&(x, s)| IncrementDensity::bimodal(x, s).unwrap()))
        .collect();
    let r = positivity_sweep(&targets, &incs, &QuadratureSpec::default()).unwrap();
    assert_eq!(r.pairs, 15);
    assert!(r.min_value.unwrap() > 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn formulas_agree_and_bound(k in 0u8..3, s in 0.05..8.0f64, bimodal in any::<bool>(), ratio in 0.05..0.6f64) {
        let spec = QuadratureSpec::default();
        let t = target(k);
        let inc = if bimodal { IncrementDensity::bimodal(s, ratio * s).unwrap() } else { IncrementDensity::gaussian(s).unwrap() };
        let e = cov_explicit1d(&t, &inc, &spec).unwrap();
        let g = cov_general(&t, &inc.into(), &spec).unwrap();
        prop_assert!((e.value - g.value).abs() < 1e-7);
        prop_assert!(e.est_error <= spec.abs_tol.max(spec.rel_tol * e.value.abs()));
        let v = t.variance().unwrap();
        prop_assert!(e.value > 0.0 && e.value < v);
    }
}
