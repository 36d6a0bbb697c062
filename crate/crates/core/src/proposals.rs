//! Proposal kernels: symmetric random-walk increments and the state-dependent
//! "flip" kernel `q(y | x) = N(-c x, var)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::densities::{reject_unknown, split_descriptor, take_f64};
use crate::error::{Error, Result};
use crate::special::{log_add_exp, normal_ln_pdf};

/// Law of the random-walk increment `Z` in `Y = X + Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IncrementDensity {
    /// N(0, sigma^2).
    GaussianRw { sigma: f64 },
    /// 0.5 N(x_star, sigma^2) + 0.5 N(-x_star, sigma^2).
    BimodalRw { x_star: f64, sigma: f64 },
    /// Atoms of mass 1/2 at +x_star and -x_star. Not a density.
    TwoPoint { x_star: f64 },
}

/// Uniform grid on [lo, hi] with `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        GridSpec { lo, hi, n }
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = if self.n > 1 { (self.hi - self.lo) / (self.n - 1) as f64 } else { 0.0 };
        (0..self.n).map(move |i| self.lo + i as f64 * step)
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl IncrementDensity {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        Ok(IncrementDensity::GaussianRw { sigma })
    }

    pub fn bimodal(x_star: f64, sigma: f64) -> Result<Self> {
        positive("sigma", sigma)?;
        if !(x_star >= 0.0 && x_star.is_finite()) {
            return Err(Error::Parameter(format!("x_star must be non-negative, got {x_star}")));
        }
        Ok(IncrementDensity::BimodalRw { x_star, sigma })
    }

    pub fn two_point(x_star: f64) -> Result<Self> {
        positive("x_star", x_star)?;
        Ok(IncrementDensity::TwoPoint { x_star })
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, IncrementDensity::TwoPoint { .. })
    }

    /// Whether the density is non-increasing in |z|. A two-component
    /// mixture with common sigma is unimodal iff x_star <= sigma.
    pub fn is_unimodal(&self) -> bool {
        match *self {
            IncrementDensity::GaussianRw { .. } => true,
            IncrementDensity::BimodalRw { x_star, sigma } => x_star <= sigma,
            IncrementDensity::TwoPoint { .. } => false,
        }
    }

    /// Component standard deviation (zero for the two-point measure).
    pub fn sigma(&self) -> f64 {
        match *self {
            IncrementDensity::GaussianRw { sigma } | IncrementDensity::BimodalRw { sigma, .. } => sigma,
            IncrementDensity::TwoPoint { .. } => 0.0,
        }
    }

    pub fn x_star(&self) -> f64 {
        match *self {
            IncrementDensity::GaussianRw { .. } => 0.0,
            IncrementDensity::BimodalRw { x_star, .. } | IncrementDensity::TwoPoint { x_star } => x_star,
        }
    }

    /// ln phi(z); `AtomicMeasure` for the two-point law.
    pub fn ln_pdf(&self, z: f64) -> Result<f64> {
        match *self {
            IncrementDensity::GaussianRw { sigma } => Ok(normal_ln_pdf(z, 0.0, sigma * sigma)),
            IncrementDensity::BimodalRw { x_star, sigma } => {
                let v = sigma * sigma;
                Ok(log_add_exp(normal_ln_pdf(z, x_star, v), normal_ln_pdf(z, -x_star, v)) - std::f64::consts::LN_2)
            }
            IncrementDensity::TwoPoint { .. } => Err(Error::AtomicMeasure),
        }
    }

    pub fn pdf(&self, z: f64) -> Result<f64> {
        self.ln_pdf(z).map(f64::exp)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            IncrementDensity::GaussianRw { sigma } => {
                let n: f64 = StandardNormal.sample(rng);
                sigma * n
            }
            IncrementDensity::BimodalRw { x_star, sigma } => {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let n: f64 = StandardNormal.sample(rng);
                sign * x_star + sigma * n
            }
            IncrementDensity::TwoPoint { x_star } => {
                if rng.random::<bool>() {
                    x_star
                } else {
                    -x_star
                }
            }
        }
    }

    /// Points around which the increment concentrates: mode centres and
    /// 3 and 10 component widths either side.
    pub fn landmarks(&self) -> Vec<f64> {
        let s = self.sigma();
        let centres: &[f64] = match self {
            IncrementDensity::GaussianRw { .. } => &[0.0],
            _ => &[-1.0, 1.0],
        };
        let x = self.x_star();
        let mut out = Vec::with_capacity(10);
        for c in centres {
            let m = c * x;
            out.push(m);
            if s > 0.0 {
                out.extend_from_slice(&[m - 10.0 * s, m - 3.0 * s, m + 3.0 * s, m + 10.0 * s]);
            }
        }
        out
    }

    /// Symmetric grid wide enough to contain the bulk of the increment, with
    /// 10^4 + 1 points.
    pub fn default_grid(&self) -> GridSpec {
        let r = self.x_star() + 12.0 * self.sigma();
        GridSpec::new(-r, r, 10_001)
    }

    /// max over the grid of |z| phi(z).
    pub fn max_abs_z_pdf(&self, grid: &GridSpec) -> Result<f64> {
        let mut best: f64 = 0.0;
        for z in grid.points() {
            best = best.max(z.abs() * self.pdf(z)?);
        }
        Ok(best)
    }

    /// `1/2 - max_z |z| phi(z)` on the grid. A non-positive margin is
    /// reported as an invariant violation carrying the offending value.
    pub fn abs_z_margin(&self, grid: &GridSpec) -> Result<f64> {
        let margin = 0.5 - self.max_abs_z_pdf(grid)?;
        if margin > 0.0 {
            Ok(margin)
        } else {
            Err(Error::Invariant(format!("1/2 - sup |z| phi(z) = {margin} <= 0 for {self}")))
        }
    }
}

impl fmt::Display for IncrementDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            IncrementDensity::GaussianRw { sigma } => write!(f, "rw-gauss:sigma={sigma}"),
            IncrementDensity::BimodalRw { x_star, sigma } => write!(f, "rw-bimodal:xstar={x_star},sigma={sigma}"),
            IncrementDensity::TwoPoint { x_star } => write!(f, "rw-twopoint:xstar={x_star}"),
        }
    }
}

/// A Metropolis–Hastings proposal `q(y | x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProposalKernel {
    /// `y = x + z` with `z` from a symmetric increment law.
    RandomWalk(IncrementDensity),
    /// `q(y | x) = N(-c x, var)` with `c` in (0, 1).
    FlipGaussian { c: f64, var: f64 },
}

impl ProposalKernel {
    pub fn flip(c: f64, var: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::Parameter(format!("flip coefficient c must lie in (0, 1), got {c}")));
        }
        positive("var", var)?;
        Ok(ProposalKernel::FlipGaussian { c, var })
    }

    pub fn increment(&self) -> Option<&IncrementDensity> {
        match self {
            ProposalKernel::RandomWalk(inc) => Some(inc),
            ProposalKernel::FlipGaussian { .. } => None,
        }
    }

    /// True when q(y | x) = q(x | y), so the proposal ratio cancels.
    pub fn is_symmetric_rw(&self) -> bool {
        matches!(self, ProposalKernel::RandomWalk(_))
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, ProposalKernel::RandomWalk(inc) if inc.is_atomic())
    }

    pub fn ln_density(&self, x: f64, y: f64) -> Result<f64> {
        match *self {
            ProposalKernel::RandomWalk(inc) => inc.ln_pdf(y - x),
            ProposalKernel::FlipGaussian { c, var } => Ok(normal_ln_pdf(y, -c * x, var)),
        }
    }

    pub fn density(&self, x: f64, y: f64) -> Result<f64> {
        self.ln_density(x, y).map(f64::exp)
    }

    pub fn propose<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        match *self {
            ProposalKernel::RandomWalk(inc) => x + inc.sample(rng),
            ProposalKernel::FlipGaussian { c, var } => {
                let n: f64 = StandardNormal.sample(rng);
                -c * x + var.sqrt() * n
            }
        }
    }

    /// Landmarks of y -> q(y | x) for quadrature partitioning.
    pub fn landmarks(&self, x: f64) -> Vec<f64> {
        match self {
            ProposalKernel::RandomWalk(inc) => inc.landmarks().into_iter().map(|z| x + z).collect(),
            ProposalKernel::FlipGaussian { c, var } => {
                let m = -c * x;
                let s = var.sqrt();
                vec![m - 3.0 * s, m, m + 3.0 * s]
            }
        }
    }
}

impl From<IncrementDensity> for ProposalKernel {
    fn from(inc: IncrementDensity) -> Self {
        ProposalKernel::RandomWalk(inc)
    }
}

impl fmt::Display for ProposalKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProposalKernel::RandomWalk(inc) => inc.fmt(f),
            ProposalKernel::FlipGaussian { c, var } => write!(f, "flip:c={c},var={var}"),
        }
    }
}

impl FromStr for IncrementDensity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<ProposalKernel>()? {
            ProposalKernel::RandomWalk(inc) => Ok(inc),
            ProposalKernel::FlipGaussian { .. } => {
                Err(Error::Parse { input: s.into(), reason: "not a random-walk increment".into() })
            }
        }
    }
}

impl FromStr for ProposalKernel {
    type Err = Error;

    /// `rw-gauss:sigma=1`, `rw-bimodal:xstar=2,sigma=0.5`,
    /// `rw-twopoint:xstar=2`, `flip:c=0.5,var=2`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, pairs) = split_descriptor(s)?;
        match name.as_str() {
            "rw-gauss" | "rw-gaussian" => {
                reject_unknown(&pairs, &["sigma"], s)?;
                Ok(IncrementDensity::gaussian(take_f64(&pairs, &["sigma"], None, s)?)?.into())
            }
            "rw-bimodal" => {
                reject_unknown(&pairs, &["xstar", "x_star", "sigma"], s)?;
                Ok(IncrementDensity::bimodal(take_f64(&pairs, &["xstar", "x_star"], None, s)?, take_f64(&pairs, &["sigma"], None, s)?)?
                    .into())
            }
            "rw-twopoint" | "rw-two-point" => {
                reject_unknown(&pairs, &["xstar", "x_star"], s)?;
                Ok(IncrementDensity::two_point(take_f64(&pairs, &["xstar", "x_star"], None, s)?)?.into())
            }
            "flip" => {
                reject_unknown(&pairs, &["c", "var"], s)?;
                ProposalKernel::flip(take_f64(&pairs, &["c"], None, s)?, take_f64(&pairs, &["var"], Some(2.0), s)?)
            }
            other => Err(Error::Parse { input: s.into(), reason: format!("unknown kernel `{other}`") }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::special::{normal_pdf, SQRT_2PI};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn density_kinds() -> Vec<IncrementDensity> {
        let mut v = Vec::new();
        for &s in &[0.05, 0.1, 0.5, 1.0, 2.38, 5.0] {
            v.push(IncrementDensity::gaussian(s).unwrap());
        }
        for &(x, s) in &[(2.0, 0.05), (2.0, 0.5), (3.0, 0.01), (1.0, 1.0), (0.5, 2.0)] {
            v.push(IncrementDensity::bimodal(x, s).unwrap());
        }
        v
    }

    #[test]
    fn two_point_support() {
        let inc = IncrementDensity::two_point(2.0).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..1000 {
            let z = inc.sample(&mut rng);
            assert!(z == 2.0 || z == -2.0);
        }
        assert_eq!(inc.pdf(0.0), Err(Error::AtomicMeasure));
    }

    #[test]
    fn bimodal_abs_mean_is_centre() {
        let inc = IncrementDensity::bimodal(3.0, 0.01).unwrap();
        let mut rng = stream(2, 0);
        let n = 10_000;
        let zs: Vec<f64> = (0..n).map(|_| inc.sample(&mut rng).abs()).collect();
        let m = zs.iter().sum::<f64>() / n as f64;
        let sd = (zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((m - 3.0).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn gaussian_increment_variance() {
        let inc = IncrementDensity::gaussian(1.0).unwrap();
        let mut rng = stream(3, 0);
        let n = 100_000;
        let zs: Vec<f64> = (0..n).map(|_| inc.sample(&mut rng)).collect();
        let m = zs.iter().sum::<f64>() / n as f64;
        let v = zs.iter().map(|z| (z - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        // SE of the sample variance for normal data is sqrt(2 / n)
        assert!((v - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt(), "{v}");
    }

    #[test]
    fn density_reference_values() {
        let k: ProposalKernel = IncrementDensity::gaussian(1.0).unwrap().into();
        assert_relative_eq!(k.density(0.0, 0.0).unwrap(), 1.0 / SQRT_2PI, epsilon = 1e-15);
        let k: ProposalKernel = IncrementDensity::bimodal(2.0, 0.5).unwrap().into();
        let oracle = 0.5 * normal_pdf(2.0, 2.0, 0.25) + 0.5 * normal_pdf(2.0, -2.0, 0.25);
        assert_relative_eq!(k.density(1.0, 3.0).unwrap(), oracle, max_relative = 1e-13);
        let k = ProposalKernel::flip(0.5, 2.0).unwrap();
        assert_relative_eq!(k.density(2.0, -1.0).unwrap(), 1.0 / (4.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn flip_parameters_are_validated() {
        assert!(ProposalKernel::flip(0.0, 2.0).is_err());
        assert!(ProposalKernel::flip(1.0, 2.0).is_err());
        assert!(ProposalKernel::flip(0.5, 0.0).is_err());
    }

    #[test]
    fn symmetry_and_normalization() {
        use crate::quadrature::{integrate, Tolerance};
        for inc in density_kinds() {
            let g = inc.default_grid();
            let g = GridSpec::new(g.lo, g.hi, 10_000);
            for z in g.points() {
                assert_eq!(inc.pdf(z).unwrap(), inc.pdf(-z).unwrap(), "{inc} at {z}");
            }
            let r = g.hi;
            let mass = integrate(|z| inc.pdf(z).unwrap(), -r, r, &inc.landmarks(), Tolerance::new(1e-13, 1e-12)).unwrap();
            assert!((mass.value - 1.0).abs() < 1e-8, "{inc}: {}", mass.value);
            let k = ProposalKernel::RandomWalk(inc);
            assert_eq!(k.density(0.3, 1.7).unwrap(), k.density(1.7, 0.3).unwrap());
        }
    }

    #[test]
    fn gaussian_margin_is_scale_free() {
        let expected = 0.5 - (-0.5f64).exp() / SQRT_2PI;
        for &s in &[0.1, 1.0, 7.0] {
            let inc = IncrementDensity::gaussian(s).unwrap();
            let m = inc.abs_z_margin(&inc.default_grid()).unwrap();
            assert_abs_diff_eq!(m, expected, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(expected, 0.258_03, epsilon = 1e-5);
    }

    #[test]
    fn margin_bound_needs_unimodality() {
        // The |z| phi(z) < 1/2 bound holds for symmetric *unimodal* densities.
        // A narrow bimodal mixture puts ~1/(2 sigma sqrt(2 pi)) density at |z| = x_star.
        for inc in density_kinds().into_iter().filter(IncrementDensity::is_unimodal) {
            assert!(inc.abs_z_margin(&inc.default_grid()).unwrap() > 0.0, "{inc}");
        }
        let narrow = IncrementDensity::bimodal(2.0, 0.05).unwrap();
        let sup = narrow.max_abs_z_pdf(&narrow.default_grid()).unwrap();
        let oracle = 2.0 * 0.5 / (0.05 * SQRT_2PI);
        assert_relative_eq!(sup, oracle, max_relative = 1e-3);
        assert!(matches!(narrow.abs_z_margin(&narrow.default_grid()), Err(Error::Invariant(_))));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["rw-gauss:sigma=2.38", "rw-bimodal:xstar=2,sigma=0.5", "rw-twopoint:xstar=1.5", "flip:c=0.25,var=2"] {
            let k: ProposalKernel = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert_eq!("flip:c=0.5".parse::<ProposalKernel>().unwrap(), ProposalKernel::flip(0.5, 2.0).unwrap());
        assert!("rw-gauss:sigma=-1".parse::<ProposalKernel>().is_err());
        assert!("flip:c=0.5".parse::<IncrementDensity>().is_err());
    }

    #[test]
    fn histogram_matches_density() {
        // chi-square goodness of fit on 10^6 draws, 60 equal-width bins over +-4 sd
        for inc in [IncrementDensity::gaussian(1.3).unwrap(), IncrementDensity::bimodal(2.0, 0.4).unwrap()] {
            let mut rng = stream(11, 0);
            let n = 1_000_000;
            let (lo, hi, bins) = (-inc.x_star() - 4.0 * inc.sigma(), inc.x_star() + 4.0 * inc.sigma(), 60);
            let w = (hi - lo) / bins as f64;
            let mut counts = vec![0u64; bins];
            for _ in 0..n {
                let z = inc.sample(&mut rng);
                if z >= lo && z < hi {
                    counts[((z - lo) / w) as usize] += 1;
                }
            }
            let mut chi2 = 0.0;
            for (i, &c) in counts.iter().enumerate() {
                let a = lo + i as f64 * w;
                let p = crate::quadrature::integrate(|z| inc.pdf(z).unwrap(), a, a + w, &[], crate::quadrature::Tolerance::new(1e-14, 1e-12))
                    .unwrap()
                    .value;
                let e = p * n as f64;
                chi2 += (c as f64 - e).powi(2) / e;
            }
            // 99.9% quantile of chi-square with 59 degrees of freedom is about 98.3
            assert!(chi2 < 98.3, "{inc}: chi2 = {chi2}");
        }
    }
}
