//! Metropolis–Hastings chain engine and chain file formats.

use std::io::{Read, Write};

use crate::densities::TargetDensity;
use crate::error::{Error, Result};
use crate::proposals::ProposalKernel;
use crate::rng::{stream, ChainRng};
use rand::Rng;

/// Burn-in used when a chain cannot start from an exact target draw.
pub const DEFAULT_BURN_IN: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    FromTarget,
    FixedPoint(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Replicate index; selects the random stream under `seed`.
    pub stream: u64,
    pub init: Init,
    pub allow_atomic: bool,
}

impl RunConfig {
    pub fn new(n_steps: usize, seed: u64) -> Self {
        RunConfig { n_steps, burn_in: 0, seed, stream: 0, init: Init::FromTarget, allow_atomic: false }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn allowing_atomic(mut self, allow: bool) -> Self {
        self.allow_atomic = allow;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Parameter("n_steps must be at least 1".into()));
        }
        if let Init::FixedPoint(x) = self.init {
            if !x.is_finite() {
                return Err(Error::Parameter(format!("initial point must be finite, got {x}")));
            }
        }
        Ok(())
    }
}

/// A post-burn-in sample path. `initial` is the state preceding `states[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub states: Vec<f64>,
    pub accepted: Vec<bool>,
    pub initial: f64,
    pub seed: u64,
    pub stream: u64,
    pub target_id: String,
    pub kernel_id: String,
    pub burn_in: usize,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Fraction of accepted proposals.
    pub fn mean_acceptance(&self) -> f64 {
        mean_acceptance(&self.accepted)
    }
}

pub fn mean_acceptance(accepted: &[bool]) -> f64 {
    if accepted.is_empty() {
        return f64::NAN;
    }
    accepted.iter().filter(|&&a| a).count() as f64 / accepted.len() as f64
}

fn ln_ratio(target: &TargetDensity, kernel: &ProposalKernel, x: f64, lp_x: f64, y: f64) -> Result<f64> {
    if lp_x == f64::NEG_INFINITY || lp_x.is_nan() {
        return Err(Error::InvalidState(x));
    }
    let lp_y = target.ln_pdf(y);
    let mut r = lp_y - lp_x;
    if !kernel.is_symmetric_rw() {
        r += kernel.ln_density(y, x)? - kernel.ln_density(x, y)?;
    }
    Ok(r.min(0.0))
}

/// min(1, pi(y) q(x|y) / (pi(x) q(y|x))), evaluated in log space.
pub fn acceptance_prob(target: &TargetDensity, kernel: &ProposalKernel, x: f64, y: f64) -> Result<f64> {
    ln_ratio(target, kernel, x, target.ln_pdf(x), y).map(f64::exp)
}

fn start_point(target: &TargetDensity, cfg: &RunConfig, rng: &mut ChainRng) -> f64 {
    match cfg.init {
        Init::FromTarget => target.sample(rng),
        Init::FixedPoint(x) => x,
    }
}

pub fn run_chain(target: &TargetDensity, kernel: &ProposalKernel, cfg: &RunConfig) -> Result<Chain> {
    cfg.validate()?;
    if kernel.is_atomic() && !cfg.allow_atomic {
        return Err(Error::AtomicMeasure);
    }
    let mut rng = stream(cfg.seed, cfg.stream);
    let mut x = start_point(target, cfg, &mut rng);
    let mut lp = target.ln_pdf(x);
    if lp == f64::NEG_INFINITY || lp.is_nan() {
        return Err(Error::InvalidState(x));
    }

    let step = |x: &mut f64, lp: &mut f64, rng: &mut ChainRng| -> Result<bool> {
        let y = kernel.propose(*x, rng);
        let r = ln_ratio(target, kernel, *x, *lp, y)?;
        let u: f64 = rng.random();
        // u < exp(r) with u in [0, 1); r = 0 always accepts
        if r == 0.0 || u.ln() < r {
            *x = y;
            *lp = target.ln_pdf(y);
            Ok(true)
        } else {
            Ok(false)
        }
    };

    for _ in 0..cfg.burn_in {
        step(&mut x, &mut lp, &mut rng)?;
    }
    let initial = x;
    let mut states = Vec::with_capacity(cfg.n_steps);
    let mut accepted = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        accepted.push(step(&mut x, &mut lp, &mut rng)?);
        states.push(x);
    }
    Ok(Chain {
        states,
        accepted,
        initial,
        seed: cfg.seed,
        stream: cfg.stream,
        target_id: target.id(),
        kernel_id: kernel.to_string(),
        burn_in: cfg.burn_in,
    })
}

const MAGIC: &[u8; 8] = b"MHCHAIN1";

/// Binary layout: magic `MHCHAIN1`, u64 LE length n, n f64 LE states,
/// n bytes of acceptance flags (0 or 1).
pub fn write_binary<W: Write>(chain: &Chain, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(chain.states.len() as u64).to_le_bytes())?;
    for s in &chain.states {
        w.write_all(&s.to_le_bytes())?;
    }
    let flags: Vec<u8> = chain.accepted.iter().map(|&a| a as u8).collect();
    w.write_all(&flags)?;
    Ok(())
}

/// Reads the binary layout written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Parse { input: String::from_utf8_lossy(&magic).into(), reason: "bad chain file magic".into() });
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let n = u64::from_le_bytes(buf) as usize;
    let mut states = Vec::with_capacity(n);
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        states.push(f64::from_le_bytes(buf));
    }
    let mut flags = vec![0u8; n];
    r.read_exact(&mut flags)?;
    let accepted = flags
        .into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(Error::Parse { input: other.to_string(), reason: "acceptance flag must be 0 or 1".into() }),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((states, accepted))
}

/// CSV with header `t,state,accepted`; states use shortest round-trip notation.
pub fn write_csv<W: Write>(chain: &Chain, mut w: W) -> Result<()> {
    writeln!(w, "t,state,accepted")?;
    for (t, (s, a)) in chain.states.iter().zip(&chain.accepted).enumerate() {
        writeln!(w, "{t},{s:?},{}", *a as u8)?;
    }
    Ok(())
}
