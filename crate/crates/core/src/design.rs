//! Covariance-minimizing random-walk design for symmetric unimodal targets.
//!
//! The explicit covariance form gives `Cov = s2 - 4 J(phi)` with
//! `J(phi) = 4 ∫_0^∞ w(s) phi(2s) ds` and `w(y) = y^2 S(y)`. Since
//! `4 ∫ phi(2s) ds = 2` over the half line, `J <= w_max`, with equality only
//! for the two-point measure at `±x*`, `x* = 2 y*`, `y* = argmax w`.

use serde::Serialize;

use crate::densities::TargetDensity;
use crate::error::{Error, Result};
use crate::proposals::IncrementDensity;
use crate::roots::{brent, golden_max};
use crate::theory::{cov_explicit1d, explicit_subtracted, QuadratureSpec};

pub use crate::theory::w_eval;

/// Grid size of the global-maximum certificate.
pub const CERTIFICATE_POINTS: usize = 10_000;
/// Grid points with `w` this close to the maximum count as near-maximal.
pub const NEAR_MAX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignResult {
    pub y_star: f64,
    pub x_star: f64,
    pub w_max: f64,
    pub cov_infimum: f64,
    pub sigma_pi2: f64,
    pub unique: bool,
    pub foc_residual: f64,
    #[serde(skip)]
    pub w_second_derivative: f64,
}

/// `2 S(y) - y pi(y)` in centred coordinates; zero at stationary points of w.
pub fn foc(target: &TargetDensity, y: f64) -> f64 {
    let x = target.mu() + y;
    2.0 * target.sf(x) - y * target.pdf(x)
}

struct Scan {
    argmax: f64,
    max: f64,
    clusters: usize,
    step: f64,
}

fn scan(target: &TargetDensity, t: f64) -> Scan {
    let step = t / CERTIFICATE_POINTS as f64;
    let ws: Vec<f64> = (1..=CERTIFICATE_POINTS).map(|i| w_eval(target, i as f64 * step)).collect();
    let (imax, &max) = ws.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let mut clusters = 0;
    let mut inside = false;
    for &w in &ws {
        let near = w >= max - NEAR_MAX;
        if near && !inside {
            clusters += 1;
        }
        inside = near;
    }
    Scan { argmax: (imax + 1) as f64 * step, max, clusters, step }
}

/// Solves `2 S(y) = y pi(y)` and certifies the root as the global maximizer
/// of `w` on a grid over (0, T].
pub fn solve_design(target: &TargetDensity, tol: f64) -> Result<DesignResult> {
    if !target.is_symmetric_unimodal() {
        return Err(Error::Contract(format!("design needs a symmetric unimodal target, got {target}")));
    }
    let s2 = target.variance()?;
    let sd = s2.sqrt();
    let t = target.truncation();
    let grid = scan(target, t);
    let log_concave = target.is_log_concave();

    let (mut y_star, mut unique) = if log_concave {
        let lo = 1e-3 * sd;
        if foc(target, lo) <= 0.0 {
            return Err(Error::Design(format!("first-order condition does not start negative at y = {lo}")));
        }
        let mut hi = sd;
        while foc(target, hi) > 0.0 {
            hi *= 2.0;
            if hi > t {
                return Err(Error::Design("no sign change of the first-order condition inside the window".into()));
            }
        }
        (brent(|y| foc(target, y), lo, hi, 1e-15 * hi, 200)?, grid.clusters == 1)
    } else {
        let m = golden_max(|y| w_eval(target, y), (grid.argmax - grid.step).max(0.0), grid.argmax + grid.step, 1e-13 * t);
        (m.x, grid.clusters == 1)
    };

    let mut w_max = w_eval(target, y_star);
    if grid.max > w_max + 1e-12 * w_max {
        // the root is not the global maximum; keep the best grid point
        let m = golden_max(|y| w_eval(target, y), (grid.argmax - grid.step).max(0.0), grid.argmax + grid.step, 1e-13 * t);
        y_star = m.x;
        w_max = m.value;
        unique = false;
    }

    let foc_residual = foc(target, y_star).abs();
    if !(foc_residual < tol) {
        return Err(Error::Design(format!("first-order residual {foc_residual:e} exceeds {tol:e}")));
    }
    let h = 1e-4 * y_star;
    let w2 = (w_eval(target, y_star + h) - 2.0 * w_max + w_eval(target, y_star - h)) / (h * h);
    if !(w2 < 0.0) {
        return Err(Error::Design(format!("second-order condition fails: w''(y*) = {w2}")));
    }
    Ok(DesignResult {
        y_star,
        x_star: 2.0 * y_star,
        w_max,
        cov_infimum: s2 - 4.0 * w_max,
        sigma_pi2: s2,
        unique,
        foc_residual,
        w_second_derivative: w2,
    })
}

/// `J(phi) = 4 ∫_0^∞ w(s) phi(2s) ds`; exactly `w(x*/2)` for the two-point law.
pub fn j_functional(target: &TargetDensity, inc: &IncrementDensity, spec: &QuadratureSpec) -> Result<f64> {
    if let IncrementDensity::TwoPoint { x_star } = *inc {
        return Ok(w_eval(target, 0.5 * x_star));
    }
    explicit_subtracted(target, inc, spec).map(|(j, _)| j)
}

/// Covariance of the bimodal increment centred at the designed jump `x*`.
pub fn covariance_at_design(target: &TargetDensity, sigma_q: f64, spec: &QuadratureSpec) -> Result<f64> {
    let d = solve_design(target, 1e-10)?;
    covariance_with_design(target, &d, sigma_q, spec)
}

pub fn covariance_with_design(target: &TargetDensity, design: &DesignResult, sigma_q: f64, spec: &QuadratureSpec) -> Result<f64> {
    let inc = IncrementDensity::bimodal(design.x_star, sigma_q)?;
    cov_explicit1d(target, &inc, spec).map(|r| r.value)
}
