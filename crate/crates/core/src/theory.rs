//! Quadrature evaluation of the unit-lag covariance Cov(X_t, X_{t+1}) of a
//! stationary Metropolis–Hastings chain.
//!
//! Three forms are provided:
//!
//! * general: `s2 - 1/2 ∬ (x-y)^2 min{pi(x)q(y|x), pi(y)q(x|y)} dx dy`,
//!   valid for any MH kernel with a proposal density;
//! * symmetric random walk: `s2 - 1/2 ∬ (x-y)^2 phi(y-x) min{pi(x), pi(y)} dx dy`;
//! * explicit one-dimensional, for symmetric unimodal targets:
//!   `4 ∫_0^∞ x S(x) [1 - 4 x phi(2x)] dx` with `S(x) = 1 - Pi(mu + x)`.
//!
//! Two-dimensional integrals are iterated adaptive quadratures over the box
//! `[mu - T, mu + T]^2`. The reported error adds the outer error, the window
//! length times the worst inner error, and a bound on the mass outside the box.

use serde::{Deserialize, Serialize};

use crate::densities::TargetDensity;
use crate::error::{Error, Result};
use crate::proposals::{IncrementDensity, ProposalKernel};
use crate::quadrature::{integrate, integrate_with, Scheme, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub scheme: Scheme,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Half-width of the window; `None` uses the target's own truncation.
    pub truncation: Option<f64>,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { scheme: Scheme::AdaptiveGK, abs_tol: 1e-9, rel_tol: 1e-8, truncation: None, max_subdivisions: 4000 }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::Parameter("quadrature tolerances must be positive".into()));
        }
        if let Some(t) = self.truncation {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Parameter(format!("truncation must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn window(&self, target: &TargetDensity) -> f64 {
        self.truncation.unwrap_or_else(|| target.truncation())
    }

    /// Absolute-only tolerance for a sub-integration; its share of the
    /// error budget is fixed by the caller.
    fn tolerance(&self, abs: f64) -> Tolerance {
        Tolerance { abs, rel: 0.0, max_subdivisions: self.max_subdivisions }
    }

    fn target_error(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formula {
    General2D,
    SymRw2D,
    Explicit1D,
}

impl Formula {
    pub fn name(self) -> &'static str {
        match self {
            Formula::General2D => "general2d",
            Formula::SymRw2D => "symrw2d",
            Formula::Explicit1D => "explicit1d",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovReport {
    pub value: f64,
    pub formula_used: Formula,
    pub est_error: f64,
    pub spec: QuadratureSpec,
}

/// Order of the iterated integration in the two-dimensional forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// Outer x, inner y.
    XThenY,
    /// Outer y, inner x.
    YThenX,
}

/// Mass and second moment of the target outside [mu - T, mu + T]:
/// `P(|X - mu| > T)` and `E[(X - mu)^2; |X - mu| > T]`.
pub fn tail_moments(target: &TargetDensity, t: f64) -> Result<(f64, f64)> {
    let mu = target.mu();
    let mass = target.sf(mu + t) + target.cdf(mu - t);
    let tol = Tolerance::new(1e-18, 1e-6);
    let far = 64.0 * t;
    let upper = integrate(|u| u * u * target.pdf(mu + u), t, far, &[2.0 * t, 4.0 * t, 8.0 * t], tol)?;
    let lower = integrate(|u| u * u * target.pdf(mu - u), t, far, &[2.0 * t, 4.0 * t, 8.0 * t], tol)?;
    Ok((mass, upper.value + lower.value))
}

fn clamp_points(points: impl IntoIterator<Item = f64>, lo: f64, hi: f64) -> Vec<f64> {
    points.into_iter().filter(|p| p.is_finite() && *p > lo && *p < hi).collect()
}

/// y-locations where y -> q(x | y) concentrates.
fn reverse_landmarks(kernel: &ProposalKernel, x: f64) -> Vec<f64> {
    match *kernel {
        ProposalKernel::RandomWalk(inc) => inc.landmarks().into_iter().map(|z| x - z).collect(),
        ProposalKernel::FlipGaussian { c, var } => {
            let m = -x / c;
            let s = var.sqrt() / c;
            vec![m - 3.0 * s, m, m + 3.0 * s]
        }
    }
}

struct Iterated {
    value: f64,
    outer_err: f64,
    inner_err_max: f64,
}

/// ∫∫ f(x, y) over [lo, hi]^2 as iterated integrals with caller-supplied
/// inner breakpoints.
fn iterated<F, B>(spec: &QuadratureSpec, lo: f64, hi: f64, outer_breaks: &[f64], inner_breaks: B, f: F) -> Result<Iterated>
where
    F: Fn(f64, f64) -> f64,
    B: Fn(f64) -> Vec<f64>,
{
    let width = hi - lo;
    let inner_tol = spec.tolerance(spec.abs_tol / (8.0 * width));
    let outer_tol = spec.tolerance(spec.abs_tol / 4.0);
    let mut inner_err_max: f64 = 0.0;
    let mut failure = None;
    let outer = integrate_with(
        spec.scheme,
        |x| {
            let breaks = inner_breaks(x);
            match integrate_with(spec.scheme, |y| f(x, y), lo, hi, &breaks, inner_tol) {
                Ok(r) => {
                    inner_err_max = inner_err_max.max(r.abs_err);
                    r.value
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        lo,
        hi,
        outer_breaks,
        outer_tol,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let outer = outer?;
    Ok(Iterated { value: outer.value, outer_err: outer.abs_err, inner_err_max })
}

fn finish(spec: &QuadratureSpec, formula: Formula, s2: f64, it: Iterated, width: f64, tail: f64) -> Result<CovReport> {
    let value = s2 - 0.5 * it.value;
    let est_error = 0.5 * (it.outer_err + width * it.inner_err_max) + tail;
    let requested = spec.target_error(value);
    if !(est_error <= requested) {
        return Err(Error::Quadrature { achieved: est_error, requested });
    }
    Ok(CovReport { value, formula_used: formula, est_error, spec: *spec })
}

fn outer_breaks(target: &TargetDensity, lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mu = target.mu();
    let s = target.scale();
    let mut pts = vec![mu, mu - s, mu + s];
    pts.extend(target.kinks().iter().copied());
    pts.extend(extra.iter().map(|e| mu + e));
    pts.extend(extra.iter().map(|e| mu - e));
    clamp_points(pts, lo, hi)
}

/// Bound on `∫_{|x-mu|>T} pi(x) E[(Y - x)^2 | x] dx`, which dominates the
/// covariance integral outside the box (by swap symmetry of the integrand).
fn box_tail_bound(target: &TargetDensity, kernel: &ProposalKernel, t: f64) -> Result<f64> {
    let (mass, second) = tail_moments(target, t)?;
    Ok(match *kernel {
        ProposalKernel::RandomWalk(inc) => {
            let m2 = inc.x_star().powi(2) + inc.sigma().powi(2);
            mass * m2
        }
        ProposalKernel::FlipGaussian { c, var } => {
            // Y - x = -(1+c)x + noise, with x measured from the origin
            let mu = target.mu();
            let shift = (1.0 + c) * mu.abs();
            var * mass + 2.0 * (1.0 + c).powi(2) * second + 2.0 * shift * shift * mass
        }
    })
}

/// General form, valid for every MH kernel with a proposal density.
pub fn cov_general(target: &TargetDensity, kernel: &ProposalKernel, spec: &QuadratureSpec) -> Result<CovReport> {
    spec.validate()?;
    if kernel.is_atomic() {
        return Err(Error::AtomicMeasure);
    }
    let s2 = target.variance()?;
    let mu = target.mu();
    let t = spec.window(target);
    let (lo, hi) = (mu - t, mu + t);
    let kinks = target.kinks();

    let integrand = |x: f64, y: f64| {
        let a = target.ln_pdf(x) + kernel.ln_density(x, y).unwrap_or(f64::NEG_INFINITY);
        let b = target.ln_pdf(y) + kernel.ln_density(y, x).unwrap_or(f64::NEG_INFINITY);
        let m = a.min(b);
        if m == f64::NEG_INFINITY {
            0.0
        } else {
            (x - y) * (x - y) * m.exp()
        }
    };
    let inner_breaks = |x: f64| {
        let mut pts = vec![x, 2.0 * mu - x];
        pts.extend(kernel.landmarks(x));
        pts.extend(reverse_landmarks(kernel, x));
        pts.extend_from_slice(kinks);
        clamp_points(pts, lo, hi)
    };
    let extra = match kernel.increment() {
        Some(inc) => vec![0.5 * inc.x_star(), inc.x_star()],
        None => vec![],
    };
    let it = iterated(spec, lo, hi, &outer_breaks(target, lo, hi, &extra), inner_breaks, integrand)?;
    let tail = box_tail_bound(target, kernel, t)?;
    finish(spec, Formula::General2D, s2, it, 2.0 * t, tail)
}

/// Symmetric random-walk form, integrated in the given order.
pub fn cov_symrw_ordered(target: &TargetDensity, inc: &IncrementDensity, spec: &QuadratureSpec, order: Order) -> Result<CovReport> {
    spec.validate()?;
    if inc.is_atomic() {
        return Err(Error::AtomicMeasure);
    }
    let s2 = target.variance()?;
    let mu = target.mu();
    let t = spec.window(target);
    let (lo, hi) = (mu - t, mu + t);
    let kinks = target.kinks();
    let marks = inc.landmarks();

    let f = |x: f64, y: f64| {
        let lp = target.ln_pdf(x).min(target.ln_pdf(y));
        let lq = inc.ln_pdf(y - x).unwrap_or(f64::NEG_INFINITY);
        let m = lp + lq;
        if m == f64::NEG_INFINITY {
            0.0
        } else {
            (x - y) * (x - y) * m.exp()
        }
    };
    let inner_breaks = |x: f64| {
        let mut pts = vec![x, 2.0 * mu - x];
        pts.extend(marks.iter().map(|z| x + z));
        pts.extend_from_slice(kinks);
        clamp_points(pts, lo, hi)
    };
    let extra = [0.5 * inc.x_star(), inc.x_star()];
    let ob = outer_breaks(target, lo, hi, &extra);
    let it = match order {
        Order::XThenY => iterated(spec, lo, hi, &ob, inner_breaks, f)?,
        Order::YThenX => iterated(spec, lo, hi, &ob, inner_breaks, |y, x| f(x, y))?,
    };
    let tail = box_tail_bound(target, &ProposalKernel::RandomWalk(*inc), t)?;
    finish(spec, Formula::SymRw2D, s2, it, 2.0 * t, tail)
}

pub fn cov_symrw(target: &TargetDensity, inc: &IncrementDensity, spec: &QuadratureSpec) -> Result<CovReport> {
    cov_symrw_ordered(target, inc, spec, Order::XThenY)
}

/// `w(y) = y^2 [1 - Pi(mu + y)]`.
pub fn w_eval(target: &TargetDensity, y: f64) -> f64 {
    y * y * target.sf(target.mu() + y)
}

/// Explicit one-dimensional form; the target must be symmetric unimodal.
/// The two-point increment is handled in closed form as `s2 - 4 w(x*/2)`.
pub fn cov_explicit1d(target: &TargetDensity, inc: &IncrementDensity, spec: &QuadratureSpec) -> Result<CovReport> {
    spec.validate()?;
    if !target.is_symmetric_unimodal() {
        return Err(Error::Contract(format!("explicit form needs a symmetric unimodal target, got {target}")));
    }
    let s2 = target.variance()?;
    if let IncrementDensity::TwoPoint { x_star } = *inc {
        let value = s2 - 4.0 * w_eval(target, 0.5 * x_star);
        return Ok(CovReport { value, formula_used: Formula::Explicit1D, est_error: 0.0, spec: *spec });
    }
    let (subtracted, err) = explicit_subtracted(target, inc, spec)?;
    let value = s2 - 4.0 * subtracted;
    let est_error = 4.0 * err;
    let requested = spec.target_error(value);
    if !(est_error <= requested) {
        return Err(Error::Quadrature { achieved: est_error, requested });
    }
    Ok(CovReport { value, formula_used: Formula::Explicit1D, est_error, spec: *spec })
}

/// `J = 4 ∫_0^∞ w(s) phi(2s) ds` with its error bound (quadrature plus tail).
pub(crate) fn explicit_subtracted(target: &TargetDensity, inc: &IncrementDensity, spec: &QuadratureSpec) -> Result<(f64, f64)> {
    let mu = target.mu();
    let t = spec.window(target);
    let mut breaks: Vec<f64> = inc.landmarks().into_iter().map(|z| 0.5 * z).collect();
    breaks.extend(target.kinks().iter().map(|k| (k - mu).abs()));
    breaks.push(target.scale());
    let breaks = clamp_points(breaks, 0.0, t);
    let r = integrate_with(
        spec.scheme,
        |s| 4.0 * w_eval(target, s) * inc.pdf(2.0 * s).unwrap_or(0.0),
        0.0,
        t,
        &breaks,
        spec.tolerance(spec.abs_tol / 8.0),
    )?;
    // ∫_T^∞ s^2 S(s) phi(2s) ds <= sup_z |z| phi(z) / 2 * ∫_T^∞ s S(s) ds, and
    // ∫_T^∞ s S(s) ds <= (1/2) E[(X - mu)^2; X - mu > T].
    let (_, second) = tail_moments(target, t)?;
    let sup = inc.max_abs_z_pdf(&inc.default_grid())?;
    let tail = 4.0 * 0.5 * sup * 0.25 * second;
    Ok((r.value, r.abs_err + tail))
}

/// Outcome of a positivity sweep over (target, increment) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub pairs: usize,
    pub min_value: Option<f64>,
    pub argmin: Option<(String, String)>,
}

/// Evaluates the explicit form on every pair and checks strict positivity.
pub fn positivity_sweep(targets: &[TargetDensity], incs: &[IncrementDensity], spec: &QuadratureSpec) -> Result<PositivityReport> {
    let mut report = PositivityReport { pairs: 0, min_value: None, argmin: None };
    for t in targets {
        for inc in incs {
            let c = cov_explicit1d(t, inc, spec)?.value;
            report.pairs += 1;
            if !(c > 0.0) {
                return Err(Error::Invariant(format!("non-positive unit-lag covariance {c} for {t} with {inc}")));
            }
            if report.min_value.is_none_or(|m| c < m) {
                report.min_value = Some(c);
                report.argmin = Some((t.to_string(), inc.to_string()));
            }
        }
    }
    Ok(report)
}

/// `(1/(N-k)) Σ (X_t - mean)(X_{t+k} - mean)`.
pub fn empirical_lag_cov(states: &[f64], k: usize) -> Result<f64> {
    let n = states.len();
    if n <= k + 1 {
        return Err(Error::Contract(format!("lag {k} needs more than {} states, got {n}", k + 1)));
    }
    let mean = states.iter().sum::<f64>() / n as f64;
    let s: f64 = states.iter().zip(&states[k..]).map(|(a, b)| (a - mean) * (b - mean)).sum();
    Ok(s / (n - k) as f64)
}
