//! Autocorrelation, effective sample size and batch-means standard errors.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sampler::Chain;
use crate::theory::empirical_lag_cov;

/// Lags above this use the FFT instead of direct sums.
pub const DIRECT_MAX_LAG: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EssMethod {
    GeyerInitialPositive,
    FixedCutoff(usize),
}

impl EssMethod {
    pub fn name(&self) -> String {
        match self {
            EssMethod::GeyerInitialPositive => "geyer-ips".into(),
            EssMethod::FixedCutoff(k) => format!("fixed-{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssReport {
    pub n: usize,
    pub ess: f64,
    /// Autocorrelations at lags 0..=k.
    pub rho: Vec<f64>,
    pub k: usize,
    pub acceptance: Option<f64>,
    pub method: EssMethod,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Mean,
    Lag1Cov,
}

fn check_len(n: usize, k: usize) -> Result<()> {
    if n <= k + 1 {
        return Err(Error::Contract(format!("autocorrelation to lag {k} needs more than {} states, got {n}", k + 1)));
    }
    Ok(())
}

/// Sums `Σ_t (x_t - m)(x_{t+k} - m)` for k = 0..=max_lag via a zero-padded FFT.
fn fft_lag_sums(xs: &[f64], max_lag: usize) -> Vec<f64> {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = xs.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.iter().take(max_lag + 1).map(|c| c.re / len as f64).collect()
}

/// `rho[k] = gamma(k) / gamma(0)` for k = 0..=max_lag, with
/// `gamma(k) = (1/(N-k)) Σ (x_t - m)(x_{t+k} - m)`.
pub fn autocorr(states: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = states.len();
    check_len(n, max_lag)?;
    let gamma: Vec<f64> = if max_lag > DIRECT_MAX_LAG {
        fft_lag_sums(states, max_lag).into_iter().enumerate().map(|(k, s)| s / (n - k) as f64).collect()
    } else {
        (0..=max_lag).map(|k| empirical_lag_cov(states, k)).collect::<Result<_>>()?
    };
    let g0 = gamma[0];
    if !(g0 > 0.0) {
        return Err(Error::DegenerateChain);
    }
    Ok(gamma.iter().map(|g| g / g0).collect())
}

/// `N / (1 + 2 Σ_{k=1}^{K} rho[k])`.
pub fn ess_from_rho(n: usize, rho: &[f64], k: usize) -> f64 {
    let s: f64 = rho[1..=k].iter().sum();
    n as f64 / (1.0 + 2.0 * s)
}

/// Largest K = 2m + 1 such that every pair sum rho[2j] + rho[2j+1], j <= m,
/// is positive. `None` if the sequence ends before a non-positive pair.
fn geyer_cutoff(rho: &[f64]) -> Option<usize> {
    let mut m = 0;
    while 2 * m + 1 < rho.len() {
        if rho[2 * m] + rho[2 * m + 1] <= 0.0 {
            return Some((2 * m).saturating_sub(1).max(1));
        }
        m += 1;
    }
    None
}

pub fn ess_states(states: &[f64], method: EssMethod) -> Result<EssReport> {
    let n = states.len();
    let limit = (n / 2).saturating_sub(1);
    let (rho, k) = match method {
        EssMethod::FixedCutoff(k) => {
            if k == 0 || k > limit {
                return Err(Error::Parameter(format!("fixed cutoff must lie in 1..={limit}, got {k}")));
            }
            (autocorr(states, k)?, k)
        }
        EssMethod::GeyerInitialPositive => {
            if limit < 1 {
                return Err(Error::Contract(format!("ESS needs at least 4 states, got {n}")));
            }
            let short = autocorr(states, limit.min(DIRECT_MAX_LAG))?;
            let (rho, k) = match geyer_cutoff(&short) {
                Some(k) => (short, k),
                None if limit <= DIRECT_MAX_LAG => (short, limit - (limit + 1) % 2),
                None => {
                    let full = autocorr(states, limit)?;
                    let k = geyer_cutoff(&full).unwrap_or(limit - (limit + 1) % 2);
                    (full, k)
                }
            };
            let mut rho = rho;
            rho.truncate(k + 1);
            (rho, k)
        }
    };
    let ess = ess_from_rho(n, &rho, k);
    Ok(EssReport { n, ess, rho, k, acceptance: None, method })
}

/// ESS of a chain with the default (Geyer) truncation and its acceptance rate.
pub fn ess(chain: &Chain) -> Result<EssReport> {
    let mut r = ess_states(&chain.states, EssMethod::GeyerInitialPositive)?;
    r.acceptance = Some(chain.mean_acceptance());
    Ok(r)
}

/// Non-overlapping batch-means standard error with floor(sqrt(N)) batches.
/// `Lag1Cov` batches the products `(x_t - m)(x_{t+1} - m)`.
pub fn batch_se(states: &[f64], statistic: Statistic) -> Result<f64> {
    let n = states.len();
    if n < 100 {
        return Err(Error::Contract(format!("batch means need at least 100 states, got {n}")));
    }
    let series: Vec<f64> = match statistic {
        Statistic::Mean => states.to_vec(),
        Statistic::Lag1Cov => {
            let m = states.iter().sum::<f64>() / n as f64;
            states.windows(2).map(|w| (w[0] - m) * (w[1] - m)).collect()
        }
    };
    let b = (series.len() as f64).sqrt().floor() as usize;
    let size = series.len() / b;
    let means: Vec<f64> = series.chunks_exact(size).take(b).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let grand = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    Ok((var / b as f64).sqrt())
}
