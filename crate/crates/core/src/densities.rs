//! Target densities: Gaussian, logistic, generalized hyperbolic secant (GHS)
//! and user-tabulated log-densities.
//!
//! Every target carries its tail truncation point `T` (the smallest power of
//! two times the scale with `pdf(mu ± T) * T < 1e-14`), which all quadratures
//! over the target share.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::quadrature::{gk21, integrate, Tolerance};
use crate::special::{ln_cosh, ln_gamma, norm_cdf, LN_SQRT_2PI};

const TAIL_PRODUCT: f64 = 1e-14;
const GHS_CDF_TOL: f64 = 1e-10;
const VARIANCE_AGREEMENT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Logistic,
    Ghs,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gauss",
            Family::Logistic => "logistic",
            Family::Ghs => "ghs",
            Family::Custom => "custom",
        }
    }
}

/// Both integral forms of the target variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCheck {
    /// Integral of (x - mu)^2 pi(x).
    pub moment_form: f64,
    /// Twice the integral of t [P(X > mu + t) + P(X < mu - t)] over t >= 0.
    pub tail_form: f64,
}

impl VarianceCheck {
    pub fn discrepancy(&self) -> f64 {
        (self.moment_form - self.tail_form).abs()
    }
}

/// A one-dimensional target density. Immutable once built; clones share
/// cached tables.
#[derive(Clone)]
pub struct TargetDensity {
    family: Family,
    mu: f64,
    scale: f64,
    alpha: f64,
    symmetric_unimodal: bool,
    ln_norm: f64,
    truncation: f64,
    ghs_table: Option<Arc<HalfCdfTable>>,
    custom: Option<Arc<CustomGrid>>,
    source: Option<String>,
    variance: Arc<OnceLock<Result<VarianceCheck>>>,
}

impl fmt::Debug for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TargetDensity({self})")
    }
}

impl PartialEq for TargetDensity {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl TargetDensity {
    pub fn gaussian(mu: f64, sd: f64) -> Result<Self> {
        check_location(mu)?;
        check_scale(sd)?;
        Self::finish(Family::Gaussian, mu, sd, f64::NAN, -sd.ln() - LN_SQRT_2PI)
    }

    pub fn logistic(mu: f64, scale: f64) -> Result<Self> {
        check_location(mu)?;
        check_scale(scale)?;
        Self::finish(Family::Logistic, mu, scale, f64::NAN, -scale.ln())
    }

    /// GHS density `c_alpha / sigma * sech^alpha(pi (x - mu) / (2 sigma))`.
    pub fn ghs(alpha: f64, mu: f64, sigma: f64) -> Result<Self> {
        check_location(mu)?;
        check_scale(sigma)?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("GHS shape alpha must be positive, got {alpha}")));
        }
        let ln_c = ghs_ln_norm(alpha);
        let mut t = Self::finish(Family::Ghs, mu, sigma, alpha, ln_c - sigma.ln())?;
        t.ghs_table = Some(Arc::new(HalfCdfTable::build(&t)?));
        Ok(t)
    }

    /// Density from log-density values tabulated on an increasing grid,
    /// linearly interpolated in log space and zero outside the grid. The
    /// values need not be normalized. When `symmetric_unimodal` is asserted
    /// it is spot-checked on the grid.
    pub fn custom(grid: Vec<f64>, log_pdf: Vec<f64>, symmetric_unimodal: bool) -> Result<Self> {
        let table = CustomGrid::new(grid, log_pdf)?;
        let mean = table.mean();
        let t_lo = mean - table.x[0];
        let t_hi = table.x[table.x.len() - 1] - mean;
        let mut t = TargetDensity {
            family: Family::Custom,
            mu: mean,
            scale: 1.0,
            alpha: f64::NAN,
            symmetric_unimodal,
            ln_norm: 0.0,
            truncation: t_lo.max(t_hi),
            ghs_table: None,
            custom: Some(Arc::new(table)),
            source: None,
            variance: Arc::new(OnceLock::new()),
        };
        if symmetric_unimodal {
            t.verify_symmetric_unimodal()?;
        }
        t.scale = t.variance()?.sqrt();
        Ok(t)
    }

    /// Reads `x,logpdf` rows (comments with `#`, optional header) from a file.
    pub fn custom_from_file(path: &str, symmetric_unimodal: bool) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut xs = Vec::new();
        let mut ls = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let (Some(a), Some(b)) = (parts.next(), parts.next()) else {
                return Err(Error::Parse { input: line.into(), reason: "expected `x,logpdf`".into() });
            };
            match (a.trim().parse::<f64>(), b.trim().parse::<f64>()) {
                (Ok(x), Ok(l)) => {
                    xs.push(x);
                    ls.push(l);
                }
                _ if xs.is_empty() => continue, // header
                _ => return Err(Error::Parse { input: line.into(), reason: "non-numeric row".into() }),
            }
        }
        let mut t = Self::custom(xs, ls, symmetric_unimodal)?;
        t.source = Some(path.to_string());
        Ok(t)
    }

    fn finish(family: Family, mu: f64, scale: f64, alpha: f64, ln_norm: f64) -> Result<Self> {
        let mut t = TargetDensity {
            family,
            mu,
            scale,
            alpha,
            symmetric_unimodal: true,
            ln_norm,
            truncation: scale,
            ghs_table: None,
            custom: None,
            source: None,
            variance: Arc::new(OnceLock::new()),
        };
        t.truncation = t.find_truncation();
        Ok(t)
    }

    fn find_truncation(&self) -> f64 {
        let mut t = self.scale;
        while self.pdf(self.mu + t) * t >= TAIL_PRODUCT || self.pdf(self.mu - t) * t >= TAIL_PRODUCT {
            t *= 2.0;
        }
        t
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Location: centre of symmetry for the parametric families, mean for
    /// custom grids.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn alpha(&self) -> Option<f64> {
        (self.family == Family::Ghs).then_some(self.alpha)
    }

    pub fn is_symmetric_unimodal(&self) -> bool {
        self.symmetric_unimodal
    }

    /// Half-width of the integration window [mu - T, mu + T].
    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// Kinks of the density inside the window (grid nodes for custom targets).
    pub fn kinks(&self) -> &[f64] {
        match &self.custom {
            Some(c) => &c.x,
            None => &[],
        }
    }

    /// Same target shifted to a new location.
    pub fn with_mu(&self, mu: f64) -> Result<Self> {
        match self.family {
            Family::Gaussian => Self::gaussian(mu, self.scale),
            Family::Logistic => Self::logistic(mu, self.scale),
            Family::Ghs => Self::ghs(self.alpha, mu, self.scale),
            Family::Custom => {
                let c = self.custom.as_ref().expect("custom grid");
                let shift = mu - self.mu;
                Self::custom(c.x.iter().map(|x| x + shift).collect(), c.ln_p.clone(), self.symmetric_unimodal)
            }
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.scale;
        match self.family {
            Family::Gaussian => self.ln_norm - 0.5 * z * z,
            Family::Logistic => {
                let a = z.abs();
                self.ln_norm - a - 2.0 * (-a).exp().ln_1p()
            }
            Family::Ghs => self.ln_norm - self.alpha * ln_cosh(0.5 * std::f64::consts::PI * z),
            Family::Custom => self.custom.as_ref().expect("custom grid").ln_pdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    /// d/dx ln pdf(x). Custom grids use the slope of the enclosing cell.
    pub fn score(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.scale;
        match self.family {
            Family::Gaussian => -z / self.scale,
            Family::Logistic => -(0.5 * z).tanh() / self.scale,
            Family::Ghs => {
                let k = 0.5 * std::f64::consts::PI / self.scale;
                -self.alpha * k * (k * (x - self.mu)).tanh()
            }
            Family::Custom => self.custom.as_ref().expect("custom grid").slope(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.scale;
        match self.family {
            Family::Gaussian => norm_cdf(z),
            Family::Logistic => 1.0 / (1.0 + (-z).exp()),
            Family::Ghs => {
                let table = self.ghs_table.as_ref().expect("GHS table");
                if x <= self.mu {
                    table.lower(self, x)
                } else {
                    1.0 - table.lower(self, 2.0 * self.mu - x)
                }
            }
            Family::Custom => self.custom.as_ref().expect("custom grid").cdf(x),
        }
    }

    /// Survival function 1 - cdf(x), accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.scale;
        match self.family {
            Family::Gaussian => norm_cdf(-z),
            Family::Logistic => 1.0 / (1.0 + z.exp()),
            Family::Ghs => {
                let table = self.ghs_table.as_ref().expect("GHS table");
                if x >= self.mu {
                    table.lower(self, 2.0 * self.mu - x)
                } else {
                    1.0 - table.lower(self, x)
                }
            }
            Family::Custom => 1.0 - self.custom.as_ref().expect("custom grid").cdf(x),
        }
    }

    /// Variance computed by the moment integral, cross-checked against the
    /// tail-integral form. Fails if the two disagree by more than 1e-8.
    pub fn variance(&self) -> Result<f64> {
        self.variance_check().map(|v| v.moment_form)
    }

    pub fn variance_check(&self) -> Result<VarianceCheck> {
        self.variance.get_or_init(|| self.compute_variance()).clone()
    }

    fn compute_variance(&self) -> Result<VarianceCheck> {
        let t = self.truncation;
        let mu = self.mu;
        let s2 = self.scale * self.scale;
        let tol = Tolerance::new(1e-15 * s2, 1e-13);
        let shifted: Vec<f64> = self.kinks().iter().map(|k| k - mu).collect();
        let mut kinks: Vec<f64> = shifted.iter().map(|k| k.abs()).collect();
        kinks.push(self.scale);
        let moment = integrate(|u| u * u * (self.pdf(mu + u) + self.pdf(mu - u)), 0.0, t, &kinks, tol)?;
        let tail = integrate(|u| 2.0 * u * (self.sf(mu + u) + self.cdf(mu - u)), 0.0, t, &kinks, tol)?;
        let check = VarianceCheck { moment_form: moment.value, tail_form: tail.value };
        if !(check.moment_form > 0.0 && check.moment_form.is_finite()) {
            return Err(Error::Parameter(format!("target variance must be positive and finite, got {}", check.moment_form)));
        }
        if check.discrepancy() > VARIANCE_AGREEMENT * check.moment_form.max(1.0) {
            return Err(Error::Consistency(format!(
                "variance forms disagree: moment {} vs tail {}",
                check.moment_form, check.tail_form
            )));
        }
        Ok(check)
    }

    /// Total mass of the density over its window, by quadrature.
    pub fn total_mass(&self) -> Result<f64> {
        let t = self.truncation;
        let mut kinks = self.kinks().to_vec();
        kinks.push(self.mu);
        let r = integrate(|x| self.pdf(x), self.mu - t, self.mu + t, &kinks, Tolerance::new(1e-15, 1e-13))?;
        Ok(r.value)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!("quantile level must lie in (0, 1), got {p}")));
        }
        Ok(match self.family {
            Family::Gaussian => self.mu + self.scale * crate::special::norm_quantile(p),
            Family::Logistic => self.mu + self.scale * (p.ln() - (-p).ln_1p()),
            Family::Ghs => self.bisect_quantile(p),
            Family::Custom => self.custom.as_ref().expect("custom grid").quantile(p),
        })
    }

    fn bisect_quantile(&self, p: f64) -> f64 {
        let mut lo = self.mu - self.scale;
        while self.cdf(lo) > p {
            lo = self.mu - 2.0 * (self.mu - lo);
        }
        let mut hi = self.mu + self.scale;
        while self.cdf(hi) < p {
            hi = self.mu + 2.0 * (hi - self.mu);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Exact draw from the target.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            Family::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.mu + self.scale * z
            }
            _ => {
                let u: f64 = Open01.sample(rng);
                self.quantile(u).expect("u in (0, 1)")
            }
        }
    }

    /// Log-concavity: analytic for Gaussian/logistic, second differences of
    /// ln pdf on a grid over the window otherwise.
    pub fn is_log_concave(&self) -> bool {
        match self.family {
            Family::Gaussian | Family::Logistic => true,
            Family::Ghs => {
                let t = self.truncation.min(40.0 * self.scale);
                let n = 4000;
                let h = 2.0 * t / n as f64;
                (1..n).all(|i| {
                    let x = self.mu - t + i as f64 * h;
                    let d2 = self.ln_pdf(x + h) - 2.0 * self.ln_pdf(x) + self.ln_pdf(x - h);
                    d2 <= 1e-12 * (1.0 + self.ln_pdf(x).abs())
                })
            }
            Family::Custom => {
                let c = self.custom.as_ref().expect("custom grid");
                c.slopes().windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()))
            }
        }
    }

    fn verify_symmetric_unimodal(&self) -> Result<()> {
        let c = self.custom.as_ref().expect("custom grid");
        let mu = self.mu;
        let peak = c.ln_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &x in &c.x {
            let a = self.pdf(x);
            let b = self.pdf(2.0 * mu - x);
            if (a - b).abs() > 1e-6 * peak.exp().max(a) {
                return Err(Error::Parameter(format!(
                    "custom target asserted symmetric but pdf({x}) = {a} differs from its mirror {b}"
                )));
            }
        }
        let right: Vec<f64> = c.x.iter().copied().filter(|&x| x >= mu).collect();
        for w in right.windows(2) {
            if self.ln_pdf(w[1]) > self.ln_pdf(w[0]) + 1e-9 {
                return Err(Error::Parameter(format!(
                    "custom target asserted unimodal but pdf increases between {} and {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Canonical descriptor, parseable by [`FromStr`].
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TargetDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            Family::Gaussian | Family::Logistic => {
                write!(f, "{}:mu={},scale={}", self.family.name(), self.mu, self.scale)
            }
            Family::Ghs => write!(f, "ghs:alpha={},mu={},scale={}", self.alpha, self.mu, self.scale),
            Family::Custom => match &self.source {
                Some(p) => write!(f, "custom:file={},symmetric={}", p, self.symmetric_unimodal),
                None => write!(f, "custom:grid={},mu={}", self.kinks().len(), self.mu),
            },
        }
    }
}

/// Splits `name:k=v,k=v` into the name and key/value pairs.
pub(crate) fn split_descriptor(s: &str) -> Result<(String, Vec<(String, String)>)> {
    let s = s.trim();
    let (name, rest) = match s.split_once(':') {
        Some((n, r)) => (n, r),
        None => (s, ""),
    };
    let mut pairs = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Parse { input: s.into(), reason: format!("expected key=value, found `{item}`") })?;
        pairs.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok((name.trim().to_ascii_lowercase(), pairs))
}

pub(crate) fn take_f64(pairs: &[(String, String)], keys: &[&str], default: Option<f64>, input: &str) -> Result<f64> {
    for (k, v) in pairs {
        if keys.contains(&k.as_str()) {
            return v.parse::<f64>().map_err(|_| Error::Parse { input: input.into(), reason: format!("`{k}` is not a number") });
        }
    }
    default.ok_or_else(|| Error::Parse { input: input.into(), reason: format!("missing `{}`", keys[0]) })
}

pub(crate) fn reject_unknown(pairs: &[(String, String)], allowed: &[&str], input: &str) -> Result<()> {
    match pairs.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
        Some((k, _)) => Err(Error::Parse { input: input.into(), reason: format!("unknown key `{k}`") }),
        None => Ok(()),
    }
}

impl FromStr for TargetDensity {
    type Err = Error;

    /// `gauss:mu=0,scale=1`, `logistic:mu=3,scale=1`,
    /// `ghs:alpha=1,mu=-7,scale=1`, `custom:file=grid.csv,symmetric=true`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = split_descriptor(s)?;
        match name.as_str() {
            "gauss" | "gaussian" | "normal" => {
                reject_unknown(&pairs, &["mu", "scale", "sigma", "sd"], s)?;
                Self::gaussian(take_f64(&pairs, &["mu"], Some(0.0), s)?, take_f64(&pairs, &["scale", "sigma", "sd"], Some(1.0), s)?)
            }
            "logistic" => {
                reject_unknown(&pairs, &["mu", "scale", "s"], s)?;
                Self::logistic(take_f64(&pairs, &["mu"], Some(0.0), s)?, take_f64(&pairs, &["scale", "s"], Some(1.0), s)?)
            }
            "ghs" => {
                reject_unknown(&pairs, &["alpha", "mu", "scale", "sigma"], s)?;
                Self::ghs(
                    take_f64(&pairs, &["alpha"], Some(1.0), s)?,
                    take_f64(&pairs, &["mu"], Some(0.0), s)?,
                    take_f64(&pairs, &["scale", "sigma"], Some(1.0), s)?,
                )
            }
            "custom" => {
                reject_unknown(&pairs, &["file", "symmetric"], s)?;
                let file = pairs
                    .iter()
                    .find(|(k, _)| k == "file")
                    .map(|(_, v)| v.clone())
                    .ok_or_else(|| Error::Parse { input: s.into(), reason: "missing `file`".into() })?;
                let symmetric = pairs.iter().any(|(k, v)| k == "symmetric" && matches!(v.as_str(), "true" | "1" | "yes"));
                Self::custom_from_file(&file, symmetric)
            }
            other => Err(Error::Parse { input: s.into(), reason: format!("unknown target family `{other}`") }),
        }
    }
}

fn check_scale(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("scale must be positive and finite, got {s}")))
    }
}

fn check_location(mu: f64) -> Result<()> {
    if mu.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("location must be finite, got {mu}")))
    }
}

/// ln c_alpha with c_alpha = (sqrt(pi)/2) Gamma((alpha+1)/2) / Gamma(alpha/2).
pub fn ghs_ln_norm(alpha: f64) -> f64 {
    0.5 * std::f64::consts::PI.ln() - std::f64::consts::LN_2 + ln_gamma(0.5 * (alpha + 1.0)) - ln_gamma(0.5 * alpha)
}

/// Lower-half cdf of a symmetric target on [mu - T, mu], stored as a
/// piecewise cubic Hermite interpolant with Fritsch–Carlson limited slopes.
struct HalfCdfTable {
    lo: f64,
    h: f64,
    values: Vec<f64>,
    /// Limited (left, right) end slopes per cell.
    slopes: Vec<(f64, f64)>,
    max_midpoint_error: f64,
}

impl HalfCdfTable {
    fn build(target: &TargetDensity) -> Result<Self> {
        let t = target.truncation;
        let mut h = 0.01 * target.scale / target.alpha.max(1.0);
        for _ in 0..4 {
            let table = Self::build_with_step(target, t, h)?;
            if table.max_midpoint_error < GHS_CDF_TOL {
                return Ok(table);
            }
            h *= 0.5;
        }
        let table = Self::build_with_step(target, t, h)?;
        if table.max_midpoint_error < GHS_CDF_TOL {
            Ok(table)
        } else {
            Err(Error::Quadrature { achieved: table.max_midpoint_error, requested: GHS_CDF_TOL })
        }
    }

    fn build_with_step(target: &TargetDensity, t: f64, h0: f64) -> Result<Self> {
        let n = (t / h0).ceil() as usize;
        let h = t / n as f64;
        let lo = target.mu - t;
        let node = |i: usize| lo + i as f64 * h;
        let mut pdf = |x: f64| target.pdf(x);

        let far = integrate(&mut pdf, lo - t, lo, &[], Tolerance::new(1e-30, 1e-12))?;
        let mut values = Vec::with_capacity(n + 1);
        values.push(far.value);
        for i in 0..n {
            let (v, _) = gk21(&mut pdf, node(i), node(i + 1));
            values.push(values[i] + v);
        }
        let centre = values[n];
        if (centre - 0.5).abs() > 1e-12 {
            return Err(Error::Consistency(format!("half-mass of symmetric target is {centre}, expected 0.5")));
        }
        // pin the centre exactly so that cdf(mu) = 1/2
        let correction = 0.5 - centre;
        for (i, v) in values.iter_mut().enumerate() {
            *v += correction * i as f64 / n as f64;
        }

        let slopes = (0..n)
            .map(|i| {
                let delta = (values[i + 1] - values[i]) / h;
                let (mut m0, mut m1) = (target.pdf(node(i)), target.pdf(node(i + 1)));
                if delta > 0.0 {
                    let (a, b) = (m0 / delta, m1 / delta);
                    let r = a * a + b * b;
                    if r > 9.0 {
                        let tau = 3.0 / r.sqrt();
                        m0 = tau * a * delta;
                        m1 = tau * b * delta;
                    }
                } else {
                    m0 = 0.0;
                    m1 = 0.0;
                }
                (m0, m1)
            })
            .collect();

        let mut table = HalfCdfTable { lo, h, values, slopes, max_midpoint_error: 0.0 };
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mid = node(i) + 0.5 * h;
            let (v, _) = gk21(&mut pdf, node(i), mid);
            let exact = table.values[i] + v;
            worst = worst.max((table.interpolate(mid) - exact).abs());
        }
        table.max_midpoint_error = worst;
        Ok(table)
    }

    fn interpolate(&self, x: f64) -> f64 {
        let n = self.slopes.len();
        let pos = (x - self.lo) / self.h;
        let i = (pos.floor() as usize).min(n - 1);
        let s = pos - i as f64;
        let (m0, m1) = self.slopes[i];
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.values[i] + h10 * self.h * m0 + h01 * self.values[i + 1] + h11 * self.h * m1
    }

    /// cdf at x <= mu.
    fn lower(&self, target: &TargetDensity, x: f64) -> f64 {
        if x < self.lo {
            // sech^alpha tails are exponential: F(x) ~ F(lo) pdf(x) / pdf(lo)
            return self.values[0] * (target.ln_pdf(x) - target.ln_pdf(self.lo)).exp();
        }
        self.interpolate(x).min(0.5)
    }
}

/// Piecewise log-linear density on a grid.
struct CustomGrid {
    x: Vec<f64>,
    ln_p: Vec<f64>,
    /// cdf at nodes.
    cum: Vec<f64>,
    ln_z: f64,
}

impl CustomGrid {
    fn new(x: Vec<f64>, ln_p: Vec<f64>) -> Result<Self> {
        if x.len() != ln_p.len() || x.len() < 3 {
            return Err(Error::Parameter("custom grid needs at least 3 points and matching log-pdf values".into()));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("custom grid must be finite and strictly increasing".into()));
        }
        if ln_p.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Parameter("custom log-pdf values must be finite or -inf".into()));
        }
        let peak = ln_p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !peak.is_finite() {
            return Err(Error::Parameter("custom log-pdf is -inf everywhere".into()));
        }
        let ln_p: Vec<f64> = ln_p.iter().map(|l| l - peak).collect();
        let mut cum = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            cum[i + 1] = cum[i] + cell_mass(x[i + 1] - x[i], ln_p[i], ln_p[i + 1]);
        }
        let z = cum[x.len() - 1];
        for c in cum.iter_mut() {
            *c /= z;
        }
        Ok(CustomGrid { x, ln_p, cum, ln_z: z.ln() })
    }

    fn cell(&self, x: f64) -> Option<usize> {
        if x < self.x[0] || x > self.x[self.x.len() - 1] {
            return None;
        }
        let i = self.x.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(self.x.len() - 2))
    }

    fn ln_pdf(&self, x: f64) -> f64 {
        match self.cell(x) {
            None => f64::NEG_INFINITY,
            Some(i) => {
                let (a, b) = (self.ln_p[i], self.ln_p[i + 1]);
                if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                    let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
                    return if (t == 0.0 && a.is_finite()) || (t == 1.0 && b.is_finite()) {
                        if t == 0.0 { a - self.ln_z } else { b - self.ln_z }
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
                a + t * (b - a) - self.ln_z
            }
        }
    }

    fn slope(&self, x: f64) -> f64 {
        match self.cell(x) {
            None => 0.0,
            Some(i) => (self.ln_p[i + 1] - self.ln_p[i]) / (self.x[i + 1] - self.x[i]),
        }
    }

    fn slopes(&self) -> Vec<f64> {
        (0..self.x.len() - 1).map(|i| (self.ln_p[i + 1] - self.ln_p[i]) / (self.x[i + 1] - self.x[i])).collect()
    }

    fn cdf(&self, x: f64) -> f64 {
        match self.cell(x) {
            None => {
                if x < self.x[0] {
                    0.0
                } else {
                    1.0
                }
            }
            Some(i) => {
                let h = x - self.x[i];
                let b = self.ln_p[i] + self.slope(x) * h;
                self.cum[i] + cell_mass(h, self.ln_p[i], b) / self.ln_z.exp()
            }
        }
    }

    fn quantile(&self, p: f64) -> f64 {
        let i = self.cum.partition_point(|&c| c < p).saturating_sub(1).min(self.x.len() - 2);
        let (mut lo, mut hi) = (self.x[i], self.x[i + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn mean(&self) -> f64 {
        let mut m = 0.0;
        let mut f = |x: f64| x * self.ln_pdf(x).exp();
        for w in self.x.windows(2) {
            m += gk21(&mut f, w[0], w[1]).0;
        }
        m
    }
}

/// Integral of exp(linear) over a cell of width h with end values a, b.
fn cell_mass(h: f64, a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
        return 0.0;
    }
    let d = b - a;
    if d.abs() < 1e-8 {
        h * a.exp() * (1.0 + 0.5 * d)
    } else {
        h * a.exp() * d.exp_m1() / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::SeedableRng;

    fn families() -> Vec<TargetDensity> {
        vec![
            TargetDensity::gaussian(0.0, 1.0).unwrap(),
            TargetDensity::gaussian(2.0, 0.3).unwrap(),
            TargetDensity::logistic(3.0, 1.0).unwrap(),
            TargetDensity::logistic(-1.0, 2.5).unwrap(),
            TargetDensity::ghs(1.0, 0.0, 1.0).unwrap(),
            TargetDensity::ghs(1.5, 0.0, 1.0).unwrap(),
            TargetDensity::ghs(3.0, -7.0, 1.0).unwrap(),
            TargetDensity::ghs(0.5, 1.0, 2.0).unwrap(),
        ]
    }

    #[test]
    fn pdf_reference_values() {
        let g = TargetDensity::gaussian(0.0, 1.0).unwrap();
        assert_relative_eq!(g.pdf(0.0), 0.398_942_280_401_432_7, epsilon = 1e-15);
        let l = TargetDensity::logistic(3.0, 1.0).unwrap();
        assert_relative_eq!(l.pdf(3.0), 0.25, epsilon = 1e-15);
        let h = TargetDensity::ghs(1.0, 0.0, 1.0).unwrap();
        assert_relative_eq!(h.pdf(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ghs_constant_matches_sech_integral() {
        // c_alpha^{-1} = (2/pi) * integral of sech^alpha
        for &alpha in &[0.5, 1.0, 1.5, 2.0, 3.0] {
            let r = integrate(|t: f64| (-alpha * ln_cosh(t)).exp(), -80.0, 80.0, &[0.0], Tolerance::new(1e-14, 1e-13)).unwrap();
            let c = 1.0 / (2.0 / std::f64::consts::PI * r.value);
            assert_relative_eq!(ghs_ln_norm(alpha).exp(), c, max_relative = 1e-12);
        }
        // Gamma(1)/Gamma(1/2) = 1/sqrt(pi)
        assert_relative_eq!(ghs_ln_norm(1.0).exp(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(TargetDensity::gaussian(0.0, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(TargetDensity::logistic(0.0, -1.0), Err(Error::Parameter(_))));
        assert!(matches!(TargetDensity::ghs(0.0, 0.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(TargetDensity::gaussian(f64::NAN, 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn cdf_reference_values() {
        let l = TargetDensity::logistic(0.0, 1.0).unwrap();
        assert_eq!(l.cdf(0.0), 0.5);
        let g = TargetDensity::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.cdf(1.96), 0.975_002_104_851_780, epsilon = 1e-12);
        let h = TargetDensity::ghs(1.5, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(h.cdf(0.0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn ghs_table_matches_closed_forms() {
        // alpha = 1: F(x) = (2/pi) atan(exp(pi x / 2)); alpha = 2: F(x) = (1 + tanh(pi x / 2)) / 2
        let g1 = TargetDensity::ghs(1.0, 0.0, 1.0).unwrap();
        let g2 = TargetDensity::ghs(2.0, 0.0, 1.0).unwrap();
        let half_pi = 0.5 * std::f64::consts::PI;
        for i in 0..=2000 {
            let x = -25.0 + i as f64 * 0.025;
            let e1 = 2.0 / std::f64::consts::PI * (half_pi * x).exp().atan();
            let e2 = 0.5 * (1.0 + (half_pi * x).tanh());
            assert!((g1.cdf(x) - e1).abs() < 1e-10, "alpha=1 at {x}");
            assert!((g2.cdf(x) - e2).abs() < 1e-10, "alpha=2 at {x}");
        }
        // survival function keeps relative accuracy deep in the tail
        let s_exact = 1.0 - 2.0 / std::f64::consts::PI * (half_pi * 20.0).exp().atan();
        let s_exact = if s_exact > 0.0 { s_exact } else { 2.0 / std::f64::consts::PI * (-half_pi * 20.0).exp() };
        assert_relative_eq!(g1.sf(20.0), s_exact, max_relative = 1e-6);
    }

    #[test]
    fn normalization_across_parameter_grid() {
        for t in families() {
            let m = t.total_mass().unwrap();
            assert!((m - 1.0).abs() < 1e-8, "{t}: mass {m}");
        }
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        for t in families() {
            let h = 1e-4 * t.scale();
            for i in 0..=40 {
                let x = t.mu() + (i as f64 - 20.0) * 0.25 * t.scale();
                let d = (t.cdf(x + h) - t.cdf(x - h)) / (2.0 * h);
                assert!((d - t.pdf(x)).abs() < 1e-5, "{t} at {x}: {d} vs {}", t.pdf(x));
            }
        }
    }

    #[test]
    fn symmetric_and_monotone_on_grid() {
        for t in families() {
            let mut prev = f64::INFINITY;
            for i in 0..=2000 {
                let u = i as f64 * 0.01 * t.scale();
                let a = t.pdf(t.mu() + u);
                assert_relative_eq!(a, t.pdf(t.mu() - u), max_relative = 1e-13);
                assert!(a <= prev, "{t} not non-increasing at {u}");
                prev = a;
            }
            assert_abs_diff_eq!(t.cdf(t.mu()), 0.5, epsilon = 1e-15);
            assert!(t.cdf(t.mu() - t.truncation()) < 1e-12);
            assert!(t.cdf(t.mu() + t.truncation()) > 1.0 - 1e-12);
        }
    }

    #[test]
    fn variance_reference_values() {
        let g = TargetDensity::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(g.variance().unwrap(), 1.0, epsilon = 1e-12);
        let l = TargetDensity::logistic(0.0, 1.0).unwrap();
        // quadrature oracle independent of the implementation's own path
        let oracle = 2.0
            * integrate(|x: f64| x * x * (-x).exp() / (1.0 + (-x).exp()).powi(2), 0.0, 80.0, &[], Tolerance::new(1e-14, 1e-13))
                .unwrap()
                .value;
        assert_abs_diff_eq!(l.variance().unwrap(), oracle, epsilon = 1e-10);
        assert_abs_diff_eq!(oracle, std::f64::consts::PI.powi(2) / 3.0, epsilon = 1e-10);
        // hyperbolic secant distribution has unit variance
        let h = TargetDensity::ghs(1.0, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(h.variance().unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn variance_forms_agree() {
        for t in families() {
            let v = t.variance_check().unwrap();
            assert!(v.discrepancy() < 1e-8, "{t}: {v:?}");
        }
    }

    #[test]
    fn translation_is_exact() {
        let base = [
            TargetDensity::gaussian(0.0, 1.3).unwrap(),
            TargetDensity::logistic(0.0, 0.7).unwrap(),
            TargetDensity::ghs(1.5, 0.0, 1.0).unwrap(),
        ];
        for t in &base {
            let s = t.with_mu(4.25).unwrap();
            for i in 0..50 {
                let x = -6.1 + i as f64 * 0.2371;
                assert_eq!(s.pdf(x), t.pdf(x - 4.25), "{t}");
            }
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        let t: TargetDensity = "ghs:alpha=1,mu=-7,scale=1".parse().unwrap();
        assert_eq!(t.family(), Family::Ghs);
        assert_eq!(t.mu(), -7.0);
        assert_eq!(t.to_string().parse::<TargetDensity>().unwrap(), t);
        let g: TargetDensity = "gauss".parse().unwrap();
        assert_eq!(g.to_string(), "gauss:mu=0,scale=1");
        assert!(matches!("cauchy:mu=0".parse::<TargetDensity>(), Err(Error::Parse { .. })));
        assert!(matches!("gauss:mu=zero".parse::<TargetDensity>(), Err(Error::Parse { .. })));
        assert!(matches!("gauss:nu=1".parse::<TargetDensity>(), Err(Error::Parse { .. })));
    }

    #[test]
    fn quantile_inverts_cdf() {
        for t in families() {
            for &p in &[1e-9, 0.01, 0.3, 0.5, 0.77, 0.999] {
                let q = t.quantile(p).unwrap();
                assert!((t.cdf(q) - p).abs() < 1e-11, "{t} p={p} q={q} cdf={}", t.cdf(q));
            }
        }
    }

    #[test]
    fn sampling_matches_mean_and_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for t in [TargetDensity::logistic(3.0, 1.0).unwrap(), TargetDensity::ghs(1.0, -7.0, 1.0).unwrap()] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| t.sample(&mut rng)).collect();
            let m = xs.iter().sum::<f64>() / n as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
            let var = t.variance().unwrap();
            assert!((m - t.mu()).abs() < 4.0 * (var / n as f64).sqrt(), "{t}: mean {m}");
            assert!((v - var).abs() < 0.05 * var, "{t}: var {v}");
        }
    }

    #[test]
    fn log_concavity_flags() {
        for t in families() {
            assert!(t.is_log_concave(), "{t}");
        }
        // two-bump custom grid is not log-concave
        let xs: Vec<f64> = (0..=400).map(|i| -8.0 + i as f64 * 0.04).collect();
        let ls: Vec<f64> = xs.iter().map(|&x| crate::special::log_add_exp(-0.5 * (x - 2.0_f64).powi(2), -0.5 * (x + 2.0_f64).powi(2))).collect();
        let c = TargetDensity::custom(xs, ls, false).unwrap();
        assert!(!c.is_log_concave());
    }

    #[test]
    fn custom_grid_reproduces_gaussian() {
        let xs: Vec<f64> = (0..=4000).map(|i| -10.0 + i as f64 * 0.005).collect();
        let ls: Vec<f64> = xs.iter().map(|x| -0.5 * x * x).collect();
        let c = TargetDensity::custom(xs, ls, true).unwrap();
        let g = TargetDensity::gaussian(0.0, 1.0).unwrap();
        assert_abs_diff_eq!(c.mu(), 0.0, epsilon = 1e-10);
        for &x in &[-2.0, -0.3, 0.0, 1.1, 3.0] {
            assert_relative_eq!(c.pdf(x), g.pdf(x), max_relative = 1e-5);
            assert_abs_diff_eq!(c.cdf(x), g.cdf(x), epsilon = 1e-5);
        }
        assert_abs_diff_eq!(c.variance().unwrap(), 1.0, epsilon = 1e-4);
        assert!(c.variance_check().unwrap().discrepancy() < 1e-8);
        assert_eq!(c.pdf(11.0), 0.0);
    }

    #[test]
    fn custom_rejects_false_symmetry_claim() {
        let xs: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let ls: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!(matches!(TargetDensity::custom(xs, ls, true), Err(Error::Parameter(_))));
    }
}
