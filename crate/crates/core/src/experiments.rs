//! Row builders for the experiment tables. Every Monte Carlo job draws from
//! its own stream `(seed, job index)`, so results do not depend on thread
//! scheduling.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::densities::TargetDensity;
use crate::design::{solve_design, DesignResult};
use crate::diagnostics::{batch_se, ess, Statistic};
use crate::error::{Error, Result};
use crate::highdim::{mean_coordinate_ess, run_highdim, ProductTarget};
use crate::proposals::{IncrementDensity, ProposalKernel};
use crate::sampler::{run_chain, RunConfig};
use crate::theory::{cov_explicit1d, cov_general, cov_symrw, empirical_lag_cov, CovReport, Formula, QuadratureSpec};

/// Shared Monte Carlo settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub n_steps: usize,
    pub replicates: usize,
    pub seed: u64,
    pub allow_atomic: bool,
}

impl McConfig {
    pub fn new(n_steps: usize, replicates: usize, seed: u64) -> Self {
        McConfig { n_steps, replicates, seed, allow_atomic: false }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Parameter("replicates must be at least 1".into()));
        }
        if self.n_steps < 1000 {
            return Err(Error::Parameter(format!("Monte Carlo experiments need at least 1000 steps, got {}", self.n_steps)));
        }
        Ok(())
    }

    fn run(&self, stream: u64) -> RunConfig {
        RunConfig::new(self.n_steps, self.seed).with_stream(stream).allowing_atomic(self.allow_atomic)
    }
}

/// Replicate-averaged lag-1 covariance with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PooledLag1 {
    pub cov: f64,
    pub se: f64,
    pub variance: f64,
    pub acceptance: f64,
}

/// Averages lag-1 covariances of independent replicates; the pooled SE is
/// `sqrt(Σ se_i^2) / R`.
pub fn pooled_lag1(target: &TargetDensity, kernel: &ProposalKernel, mc: &McConfig, stream_base: u64) -> Result<PooledLag1> {
    mc.validate()?;
    let per: Vec<(f64, f64, f64, f64)> = (0..mc.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let chain = run_chain(target, kernel, &mc.run(stream_base + r))?;
            Ok((
                empirical_lag_cov(&chain.states, 1)?,
                batch_se(&chain.states, Statistic::Lag1Cov)?,
                empirical_lag_cov(&chain.states, 0)?,
                chain.mean_acceptance(),
            ))
        })
        .collect::<Result<_>>()?;
    let r = per.len() as f64;
    Ok(PooledLag1 {
        cov: per.iter().map(|p| p.0).sum::<f64>() / r,
        se: per.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt() / r,
        variance: per.iter().map(|p| p.2).sum::<f64>() / r,
        acceptance: per.iter().map(|p| p.3).sum::<f64>() / r,
    })
}

// ---------------------------------------------------------------- theory table

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryRow {
    pub target: String,
    pub kernel: String,
    pub formula: String,
    pub cov: f64,
    pub est_error: f64,
}

/// Evaluates every applicable formula on each (target, kernel) pair.
pub fn theory_table(targets: &[TargetDensity], kernels: &[ProposalKernel], spec: &QuadratureSpec) -> Result<Vec<TheoryRow>> {
    let mut rows = Vec::new();
    for t in targets {
        for k in kernels {
            let mut reports: Vec<CovReport> = Vec::new();
            if !k.is_atomic() {
                reports.push(cov_general(t, k, spec)?);
            }
            if let Some(inc) = k.increment() {
                if !inc.is_atomic() {
                    reports.push(cov_symrw(t, inc, spec)?);
                }
                if t.is_symmetric_unimodal() {
                    reports.push(cov_explicit1d(t, inc, spec)?);
                }
            }
            rows.extend(reports.into_iter().map(|r| TheoryRow {
                target: t.to_string(),
                kernel: k.to_string(),
                formula: r.formula_used.name().into(),
                cov: r.value,
                est_error: r.est_error,
            }));
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------- ESS sweep

/// Kernel family in the ESS sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepFamily {
    Gaussian,
    /// Bimodal with `sigma_q = ratio * x_star`.
    Bimodal { ratio: f64 },
}

impl SweepFamily {
    pub fn label(&self) -> String {
        match self {
            SweepFamily::Gaussian => "gauss".into(),
            SweepFamily::Bimodal { ratio } => format!("bimodal-{ratio:.2}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssSweepConfig {
    pub targets: Vec<TargetDensity>,
    pub families: Vec<SweepFamily>,
    /// Multipliers of the target standard deviation for the Gaussian family.
    pub gauss_scales: Vec<f64>,
    /// Joint multipliers of the designed `(x*, sigma_q)` pair.
    pub bimodal_scales: Vec<f64>,
    pub mc: McConfig,
}

impl EssSweepConfig {
    pub fn standard(mc: McConfig) -> Result<Self> {
        Ok(EssSweepConfig {
            targets: vec![TargetDensity::gaussian(0.0, 1.0)?, TargetDensity::logistic(0.0, 1.0)?, TargetDensity::ghs(1.0, 0.0, 1.0)?],
            families: vec![SweepFamily::Gaussian, SweepFamily::Bimodal { ratio: 0.2 }, SweepFamily::Bimodal { ratio: 0.4 }],
            gauss_scales: vec![0.5, 0.7, 1.0, 1.4, 2.0, 2.5, 3.0, 4.0, 5.5, 7.5, 10.0, 14.0],
            bimodal_scales: vec![0.25, 0.35, 0.5, 0.7, 0.85, 1.0, 1.2, 1.4, 1.7, 2.0, 2.5],
            mc,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EssRow {
    pub kernel: String,
    pub sigma_q: f64,
    pub acceptance: f64,
    pub ess: f64,
    pub ess_per_1k_steps: f64,
    pub lag1_corr: f64,
    pub target: String,
    pub family: String,
    pub scale: f64,
    pub x_star: f64,
    pub replicate: usize,
}

/// Wall-clock per row, kept apart from the reproducible table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub target: String,
    pub family: String,
    pub scale: f64,
    pub replicate: usize,
    pub wall_ms: f64,
}

fn sweep_kernel(family: SweepFamily, scale: f64, sd: f64, design: &DesignResult) -> Result<IncrementDensity> {
    match family {
        SweepFamily::Gaussian => IncrementDensity::gaussian(scale * sd),
        SweepFamily::Bimodal { ratio } => IncrementDensity::bimodal(scale * design.x_star, scale * ratio * design.x_star),
    }
}

/// Iteration-matched ESS against acceptance rate.
pub fn ess_sweep(cfg: &EssSweepConfig) -> Result<(Vec<EssRow>, Vec<TimingRow>)> {
    cfg.mc.validate()?;
    struct Job {
        target: usize,
        family: SweepFamily,
        scale: f64,
        inc: IncrementDensity,
        x_star: f64,
        replicate: usize,
    }
    let mut jobs = Vec::new();
    for (ti, t) in cfg.targets.iter().enumerate() {
        let design = solve_design(t, 1e-10)?;
        let sd = t.variance()?.sqrt();
        for &family in &cfg.families {
            let scales = match family {
                SweepFamily::Gaussian => &cfg.gauss_scales,
                SweepFamily::Bimodal { .. } => &cfg.bimodal_scales,
            };
            for &scale in scales {
                let inc = sweep_kernel(family, scale, sd, &design)?;
                for replicate in 0..cfg.mc.replicates {
                    jobs.push(Job { target: ti, family, scale, inc, x_star: inc.x_star(), replicate });
                }
            }
        }
    }
    let out: Vec<(EssRow, TimingRow)> = jobs
        .par_iter()
        .enumerate()
        .map(|(j, job)| {
            let t = &cfg.targets[job.target];
            let start = Instant::now();
            let chain = run_chain(t, &job.inc.into(), &cfg.mc.run(j as u64))?;
            let r = ess(&chain)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let row = EssRow {
                kernel: job.inc.to_string(),
                sigma_q: job.inc.sigma(),
                acceptance: chain.mean_acceptance(),
                ess: r.ess,
                ess_per_1k_steps: 1000.0 * r.ess / chain.len() as f64,
                lag1_corr: r.rho[1],
                target: t.to_string(),
                family: job.family.label(),
                scale: job.scale,
                x_star: job.x_star,
                replicate: job.replicate,
            };
            let timing = TimingRow { target: row.target.clone(), family: row.family.clone(), scale: job.scale, replicate: job.replicate, wall_ms };
            Ok((row, timing))
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().unzip())
}

/// Replicate-averaged (acceptance, ESS, ESS standard error) per sweep setting,
/// sorted by acceptance.
pub fn sweep_curve(rows: &[EssRow], target: &str, family: &str) -> Vec<(f64, f64, f64)> {
    let mut groups: Vec<(f64, Vec<&EssRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.target == target && r.family == family) {
        match groups.iter_mut().find(|g| g.0 == r.scale) {
            Some(g) => g.1.push(r),
            None => groups.push((r.scale, vec![r])),
        }
    }
    let mut curve: Vec<(f64, f64, f64)> = groups
        .into_iter()
        .map(|(_, g)| {
            let n = g.len() as f64;
            let acc = g.iter().map(|r| r.acceptance).sum::<f64>() / n;
            let e = g.iter().map(|r| r.ess).sum::<f64>() / n;
            let se = if g.len() > 1 { (g.iter().map(|r| (r.ess - e).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt() } else { f64::NAN };
            (acc, e, se)
        })
        .collect();
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    curve
}

/// Linear interpolation of (ESS, SE) at acceptance `a` on a curve from
/// [`sweep_curve`]; `None` outside its range.
pub fn ess_at_acceptance(curve: &[(f64, f64, f64)], a: f64) -> Option<(f64, f64)> {
    curve.windows(2).find(|w| w[0].0 <= a && a <= w[1].0).map(|w| {
        let span = w[1].0 - w[0].0;
        let s = if span > 0.0 { (a - w[0].0) / span } else { 0.0 };
        (w[0].1 + s * (w[1].1 - w[0].1), w[0].2 + s * (w[1].2 - w[0].2))
    })
}

// ---------------------------------------------------------------- width sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SigmaSweepRow {
    pub target: String,
    pub x_star: f64,
    pub sigma_q: f64,
    pub ratio: f64,
    pub inv_sigma_q: f64,
    pub theory_corr: f64,
    pub emp_corr: f64,
    pub emp_se: f64,
    pub acceptance: f64,
    pub asymptote: f64,
}

pub const SIGMA_SWEEP_RATIOS: [f64; 7] = [0.8, 0.4, 0.2, 0.1, 0.05, 0.025, 0.0125];

/// Lag-1 correlation of the designed bimodal kernel as `sigma_q`
/// shrinks, against the two-point asymptote.
pub fn sigma_sweep(target: &TargetDensity, ratios: &[f64], mc: &McConfig, spec: &QuadratureSpec) -> Result<Vec<SigmaSweepRow>> {
    let d = solve_design(target, 1e-10)?;
    let s2 = d.sigma_pi2;
    let mut rows = Vec::new();
    for (i, &ratio) in ratios.iter().enumerate() {
        let sigma_q = ratio * d.x_star;
        let inc = IncrementDensity::bimodal(d.x_star, sigma_q)?;
        let theory = cov_explicit1d(target, &inc, spec)?.value;
        let pooled = pooled_lag1(target, &inc.into(), mc, (i * mc.replicates) as u64)?;
        rows.push(SigmaSweepRow {
            target: target.to_string(),
            x_star: d.x_star,
            sigma_q,
            ratio,
            inv_sigma_q: 1.0 / sigma_q,
            theory_corr: theory / s2,
            emp_corr: pooled.cov / pooled.variance,
            emp_se: pooled.se / pooled.variance,
            acceptance: pooled.acceptance,
            asymptote: d.cov_infimum / s2,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- histograms

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistRow {
    pub target: String,
    pub kernel: String,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub center: f64,
    pub count: u64,
    pub expected: f64,
    pub density_emp: f64,
    pub pdf_center: f64,
}

pub const HIST_BINS: usize = 30;

/// Histogram of a pooled chain against the exact density. Bins split
/// [Q(0.005), Q(0.995)] evenly; `expected` uses exact cdf differences.
pub fn histogram(target: &TargetDensity, ratio: f64, mc: &McConfig) -> Result<Vec<HistRow>> {
    mc.validate()?;
    let d = solve_design(target, 1e-10)?;
    let inc = IncrementDensity::bimodal(d.x_star, ratio * d.x_star)?;
    let kernel: ProposalKernel = inc.into();
    let lo = target.quantile(0.005)?;
    let hi = target.quantile(0.995)?;
    let width = (hi - lo) / HIST_BINS as f64;
    let counts: Vec<Vec<u64>> = (0..mc.replicates as u64)
        .into_par_iter()
        .map(|r| {
            let chain = run_chain(target, &kernel, &mc.run(r))?;
            let mut c = vec![0u64; HIST_BINS];
            for &x in &chain.states {
                if x >= lo && x < hi {
                    c[(((x - lo) / width) as usize).min(HIST_BINS - 1)] += 1;
                }
            }
            Ok(c)
        })
        .collect::<Result<_>>()?;
    let total = (mc.n_steps * mc.replicates) as f64;
    Ok((0..HIST_BINS)
        .map(|b| {
            let a = lo + b as f64 * width;
            let z = a + width;
            let count: u64 = counts.iter().map(|c| c[b]).sum();
            let center = 0.5 * (a + z);
            HistRow {
                target: target.to_string(),
                kernel: kernel.to_string(),
                bin: b,
                lo: a,
                hi: z,
                center,
                count,
                expected: total * (target.cdf(z) - target.cdf(a)),
                density_emp: count as f64 / (total * width),
                pdf_center: target.pdf(center),
            }
        })
        .collect())
}

// ---------------------------------------------------------------- flip kernel

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleRow {
    pub target: String,
    pub c: f64,
    pub var: f64,
    pub cov_quad: f64,
    pub est_error: f64,
    pub cov_emp: f64,
    pub se: f64,
    pub acceptance: f64,
}

pub const COUNTEREXAMPLE_CS: [f64; 3] = [0.25, 0.5, 0.75];

/// The flip kernel `N(-c x, var)` on a target.
pub fn counterexample(target: &TargetDensity, cs: &[f64], var: f64, mc: &McConfig, spec: &QuadratureSpec) -> Result<Vec<CounterexampleRow>> {
    let mut rows = Vec::new();
    for (i, &c) in cs.iter().enumerate() {
        let k = ProposalKernel::flip(c, var)?;
        let q = cov_general(target, &k, spec)?;
        debug_assert_eq!(q.formula_used, Formula::General2D);
        let p = pooled_lag1(target, &k, mc, (i * mc.replicates) as u64)?;
        rows.push(CounterexampleRow {
            target: target.to_string(),
            c,
            var,
            cov_quad: q.value,
            est_error: q.est_error,
            cov_emp: p.cov,
            se: p.se,
            acceptance: p.acceptance,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------- product targets

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HighdimRow {
    pub d: usize,
    pub ell: f64,
    pub mbar: f64,
    pub pred_acc: f64,
    pub emp_acc: f64,
    pub coord: usize,
    pub diag_pred: f64,
    pub diag_emp: f64,
    pub offdiag_max: Option<f64>,
    pub diag_se: f64,
    pub min_eigenvalue: Option<f64>,
    pub mean_ess: f64,
}

pub const ELL_GRID: [f64; 6] = [1.0, 1.5, 2.0, 2.38, 3.0, 4.0];

/// One run per `ell`, one row per coordinate.
pub fn highdim_sweep(product: &ProductTarget, ells: &[f64], mc: &McConfig) -> Result<Vec<HighdimRow>> {
    mc.validate()?;
    let mut rows = Vec::new();
    for (i, &ell) in ells.iter().enumerate() {
        let (chain, r) = run_highdim(product, ell, &mc.run(i as u64))?;
        let mean_ess = mean_coordinate_ess(&chain)?;
        for c in 0..r.d {
            rows.push(HighdimRow {
                d: r.d,
                ell,
                mbar: r.mbar,
                pred_acc: r.predicted_acceptance,
                emp_acc: r.empirical_acceptance,
                coord: c,
                diag_pred: r.diag_cov_pred[c],
                diag_emp: r.diag_cov_emp[c],
                offdiag_max: r.offdiag_max,
                diag_se: r.diag_cov_se[c],
                min_eigenvalue: r.min_eigenvalue,
                mean_ess,
            });
        }
    }
    Ok(rows)
}
