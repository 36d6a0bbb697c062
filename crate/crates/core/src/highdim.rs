//! Random-walk Metropolis on product targets with isotropic Gaussian
//! increments of per-coordinate variance `ell^2 / d`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::densities::TargetDensity;
use crate::diagnostics::{batch_se, ess_states, EssMethod, Statistic};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};
use crate::rng::stream;
use crate::roots::golden_max;
use crate::sampler::{Init, RunConfig};
use crate::special::norm_cdf;
use crate::theory::{empirical_lag_cov, QuadratureSpec};

/// Classical optimal scale for `mbar = 1`.
pub const ELL_STAR_UNIT: f64 = 2.38;
/// Cross-covariance matrices are only formed up to this dimension.
pub const MAX_MATRIX_DIM: usize = 100;
const GEMM_ROWS: usize = 8192;

/// `m = E[(d/dx ln p(X))^2]` by quadrature over the target window.
pub fn roughness(component: &TargetDensity, spec: &QuadratureSpec) -> Result<f64> {
    let mu = component.mu();
    let t = spec.truncation.unwrap_or_else(|| component.truncation());
    let mut breaks = component.kinks().to_vec();
    breaks.push(mu);
    let tol = Tolerance { abs: spec.abs_tol, rel: spec.rel_tol, max_subdivisions: spec.max_subdivisions };
    let r = integrate(|x| component.score(x).powi(2) * component.pdf(x), mu - t, mu + t, &breaks, tol)
        .map_err(|e| Error::InfiniteRoughness(format!("{component}: {e}")))?;
    if !(r.value.is_finite() && r.value > 0.0) {
        return Err(Error::InfiniteRoughness(format!("{component}: {}", r.value)));
    }
    Ok(r.value)
}

/// Limit acceptance rate `2 Phi(-ell sqrt(mbar) / 2)`.
pub fn predicted_acceptance(mbar: f64, ell: f64) -> f64 {
    2.0 * norm_cdf(-0.5 * ell * mbar.sqrt())
}

/// Efficiency curve `ell^2 * 2 Phi(-ell sqrt(mbar) / 2)`.
pub fn h(mbar: f64, ell: f64) -> f64 {
    ell * ell * predicted_acceptance(mbar, ell)
}

/// Maximizes `h` on (0, 20/sqrt(mbar)] by golden section and checks the
/// result against `2.38 / sqrt(mbar)`.
pub fn optimize_ell(mbar: f64) -> Result<(f64, f64)> {
    if !(mbar > 0.0 && mbar.is_finite()) {
        return Err(Error::Parameter(format!("mbar must be positive, got {mbar}")));
    }
    let r = mbar.sqrt();
    let m = golden_max(|l| h(mbar, l), 0.0, 20.0 / r, 1e-10 / r);
    if m.at_edge {
        return Err(Error::Invariant(format!("efficiency maximum at the bracket edge ell = {}", m.x)));
    }
    if (m.x - ELL_STAR_UNIT / r).abs() >= 0.01 / r {
        return Err(Error::Invariant(format!("optimal scale {} differs from {}", m.x, ELL_STAR_UNIT / r)));
    }
    Ok((m.x, m.value))
}

#[derive(Debug, Clone)]
pub struct ProductTarget {
    components: Vec<TargetDensity>,
    variances: Vec<f64>,
    roughness: Vec<f64>,
}

impl ProductTarget {
    pub fn new(components: Vec<TargetDensity>, spec: &QuadratureSpec) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Parameter("product target needs at least one component".into()));
        }
        let variances = components.iter().map(TargetDensity::variance).collect::<Result<Vec<_>>>()?;
        let roughness = components.iter().map(|c| roughness(c, spec)).collect::<Result<Vec<_>>>()?;
        Ok(ProductTarget { components, variances, roughness })
    }

    /// `d` copies of one component.
    pub fn iid(component: TargetDensity, d: usize, spec: &QuadratureSpec) -> Result<Self> {
        if d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        let v = component.variance()?;
        let m = roughness(&component, spec)?;
        Ok(ProductTarget { components: vec![component; d], variances: vec![v; d], roughness: vec![m; d] })
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[TargetDensity] {
        &self.components
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn roughness(&self) -> &[f64] {
        &self.roughness
    }

    /// Finite-d average roughness.
    pub fn mbar(&self) -> f64 {
        self.roughness.iter().sum::<f64>() / self.d() as f64
    }

    fn ln_pdf(&self, x: &[f64]) -> f64 {
        self.components.iter().zip(x).map(|(c, xi)| c.ln_pdf(*xi)).sum()
    }
}

/// Row-major `n x d` sample path.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorChain {
    pub d: usize,
    pub states: Vec<f64>,
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub stream: u64,
}

impl VectorChain {
    pub fn len(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accepted.is_empty()
    }

    pub fn coordinate(&self, i: usize) -> Vec<f64> {
        self.states.iter().skip(i).step_by(self.d).copied().collect()
    }

    pub fn mean_acceptance(&self) -> f64 {
        crate::sampler::mean_acceptance(&self.accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub ell: f64,
    pub d: usize,
    pub mbar: f64,
    pub predicted_acceptance: f64,
    pub h: f64,
    pub ell_star: f64,
    pub empirical_acceptance: f64,
    pub diag_cov_pred: Vec<f64>,
    pub diag_cov_emp: Vec<f64>,
    pub diag_cov_se: Vec<f64>,
    pub offdiag_max: Option<f64>,
    pub min_eigenvalue: Option<f64>,
}

pub fn run_vector_chain(product: &ProductTarget, ell: f64, cfg: &RunConfig) -> Result<VectorChain> {
    cfg.validate()?;
    let d = product.d();
    if d < 2 {
        return Err(Error::Parameter(format!("high-dimensional runs need d >= 2, got {d}")));
    }
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::Parameter(format!("ell must be positive, got {ell}")));
    }
    let mut rng = stream(cfg.seed, cfg.stream);
    let mut x: Vec<f64> = match cfg.init {
        Init::FromTarget => product.components.iter().map(|c| c.sample(&mut rng)).collect(),
        Init::FixedPoint(v) => vec![v; d],
    };
    let mut lp = product.ln_pdf(&x);
    if !lp.is_finite() {
        return Err(Error::InvalidState(x[0]));
    }
    let step = ell / (d as f64).sqrt();
    let mut y = vec![0.0; d];
    let mut states = Vec::with_capacity(cfg.n_steps * d);
    let mut accepted = Vec::with_capacity(cfg.n_steps);
    for t in 0..cfg.burn_in + cfg.n_steps {
        for (yi, xi) in y.iter_mut().zip(&x) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *yi = xi + step * z;
        }
        let lp_y = product.ln_pdf(&y);
        let u: f64 = rng.random();
        let acc = lp_y >= lp || u.ln() < lp_y - lp;
        if acc {
            std::mem::swap(&mut x, &mut y);
            lp = lp_y;
        }
        if t >= cfg.burn_in {
            accepted.push(acc);
            states.extend_from_slice(&x);
        }
    }
    Ok(VectorChain { d, states, accepted, seed: cfg.seed, stream: cfg.stream })
}

/// Empirical lag-1 cross-covariance `C[i][j] = (1/(N-1)) Σ (x_t,i - m_i)(x_{t+1},j - m_j)`.
pub fn lag1_cross_cov(chain: &VectorChain) -> Result<DMatrix<f64>> {
    let (n, d) = (chain.len(), chain.d);
    if n < 3 {
        return Err(Error::Contract(format!("cross-covariance needs at least 3 states, got {n}")));
    }
    let mut means = vec![0.0; d];
    for row in chain.states.chunks_exact(d) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centred = |t: usize, j: usize| chain.states[t * d + j] - means[j];
    let mut c = DMatrix::<f64>::zeros(d, d);
    let mut start = 0;
    while start < n - 1 {
        let rows = GEMM_ROWS.min(n - 1 - start);
        let a = DMatrix::from_fn(rows, d, |r, j| centred(start + r, j));
        let b = DMatrix::from_fn(rows, d, |r, j| centred(start + r + 1, j));
        c.gemm_tr(1.0, &a, &b, 1.0);
        start += rows;
    }
    Ok(c / (n - 1) as f64)
}

/// Builds the scaling report for a finished chain.
pub fn scaling_report(product: &ProductTarget, ell: f64, chain: &VectorChain) -> Result<ScalingReport> {
    let d = product.d();
    let mbar = product.mbar();
    let pred = predicted_acceptance(mbar, ell);
    let correction = ell * ell / (2.0 * d as f64) * pred;
    let mut diag_cov_emp = Vec::with_capacity(d);
    let mut diag_cov_se = Vec::with_capacity(d);
    for i in 0..d {
        let col = chain.coordinate(i);
        diag_cov_emp.push(empirical_lag_cov(&col, 1)?);
        diag_cov_se.push(batch_se(&col, Statistic::Lag1Cov)?);
    }
    let (offdiag_max, min_eigenvalue) = if d <= MAX_MATRIX_DIM {
        let c = lag1_cross_cov(chain)?;
        let off = (0..d).flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| c[(i, j)].abs()).fold(0.0, f64::max);
        let sym = (&c + c.transpose()) * 0.5;
        let min_eig = SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        (Some(off), Some(min_eig))
    } else {
        (None, None)
    };
    Ok(ScalingReport {
        ell,
        d,
        mbar,
        predicted_acceptance: pred,
        h: h(mbar, ell),
        ell_star: ELL_STAR_UNIT / mbar.sqrt(),
        empirical_acceptance: chain.mean_acceptance(),
        diag_cov_pred: product.variances.iter().map(|v| v - correction).collect(),
        diag_cov_emp,
        diag_cov_se,
        offdiag_max,
        min_eigenvalue,
    })
}

pub fn run_highdim(product: &ProductTarget, ell: f64, cfg: &RunConfig) -> Result<(VectorChain, ScalingReport)> {
    let chain = run_vector_chain(product, ell, cfg)?;
    let report = scaling_report(product, ell, &chain)?;
    Ok((chain, report))
}

/// Mean over coordinates of the per-coordinate ESS.
pub fn mean_coordinate_ess(chain: &VectorChain) -> Result<f64> {
    let mut total = 0.0;
    for i in 0..chain.d {
        total += ess_states(&chain.coordinate(i), EssMethod::GeyerInitialPositive)?.ess;
    }
    Ok(total / chain.d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acceptance_limit_values() {
        assert_eq!(predicted_acceptance(1.0, 0.0), 1.0);
        // 2 Phi(-1.19), 30-digit reference
        assert!((predicted_acceptance(1.0, 2.38) - 0.234_046_392_046_217_4).abs() < 1e-15);
        assert_eq!(predicted_acceptance(4.0, 1.19), predicted_acceptance(1.0, 2.38));
    }

    #[test]
    fn optimizer_tracks_scale() {
        let (l1, h1) = optimize_ell(1.0).unwrap();
        assert!((l1 - 2.38).abs() < 0.01);
        assert!((h1 - l1 * l1 * predicted_acceptance(1.0, l1)).abs() < 1e-15);
        let (l4, _) = optimize_ell(4.0).unwrap();
        assert!((l4 - 1.19).abs() < 0.005);
    }

    #[test]
    fn small_dimension_is_rejected() {
        let p = ProductTarget::iid(TargetDensity::gaussian(0.0, 1.0).unwrap(), 1, &QuadratureSpec::default()).unwrap();
        assert!(run_vector_chain(&p, 1.0, &RunConfig::new(10, 0)).is_err());
    }
}
