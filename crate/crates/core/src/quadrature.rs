//! One-dimensional quadrature: globally adaptive Gauss–Kronrod (21 point)
//! with user breakpoints, and a composite Simpson rule with step doubling.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kronrod abscissae, descending; the last entry is the centre.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_931_232_260,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// 10-point Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    AdaptiveGK,
    CompositeSimpson,
}

/// Result of a one-dimensional integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_err: f64,
    pub evaluations: usize,
}

/// Tolerances and limits for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Tolerance { abs, rel, max_subdivisions: 4000 }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    /// Round-off floor included in `err`; bisection cannot remove it.
    floor: f64,
}

impl Segment {
    fn reducible(&self) -> f64 {
        self.err - self.floor
    }
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.reducible() == other.reducible()
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.reducible().total_cmp(&other.reducible())
    }
}

/// Single 21-point Gauss–Kronrod panel on [a, b]: (kronrod value, error estimate).
pub fn gk21<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let (v, e, _) = gk21_floor(f, a, b);
    (v, e)
}

/// As [`gk21`], also returning the round-off floor of the error estimate.
fn gk21_floor<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let abs_half = half.abs();
    let value = res_k * half;
    res_abs *= abs_half;
    res_asc *= abs_half;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let mut floor = 0.0;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        floor = 50.0 * f64::EPSILON * res_abs;
        err = err.max(floor);
    }
    (value, err, floor.min(err))
}

/// Globally adaptive Gauss–Kronrod integration of `f` over [a, b].
///
/// `breakpoints` strictly inside (a, b) seed the initial partition; points
/// outside the interval are ignored. Kinks belong here, and narrow peaks
/// should be bracketed a few widths either side since the first panels may
/// otherwise step over them entirely.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Parameter(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral { value: 0.0, abs_err: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > lo && p < hi && p.is_finite()).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(lo);
    nodes.extend(cuts);
    nodes.push(hi);

    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut reducible = 0.0;
    let mut evaluations = 0;
    for w in nodes.windows(2) {
        let (v, e, fl) = gk21_floor(&mut f, w[0], w[1]);
        evaluations += 21;
        total += v;
        reducible += e - fl;
        heap.push(Segment { a: w[0], b: w[1], value: v, err: e, floor: fl });
    }

    let mut subdivisions = heap.len();
    while reducible > tol.target(total) {
        if subdivisions >= tol.max_subdivisions {
            break;
        }
        let seg = heap.pop().expect("non-empty partition");
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // interval exhausted at machine resolution
            heap.push(seg);
            break;
        }
        let (v1, e1, f1) = gk21_floor(&mut f, seg.a, mid);
        let (v2, e2, f2) = gk21_floor(&mut f, mid, seg.b);
        evaluations += 42;
        total += v1 + v2 - seg.value;
        reducible += (e1 - f1) + (e2 - f2) - seg.reducible();
        heap.push(Segment { a: seg.a, b: mid, value: v1, err: e1, floor: f1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, err: e2, floor: f2 });
        subdivisions += 1;
    }

    // re-sum to shed accumulated cancellation in the running totals
    let (value, abs_err, reducible) =
        heap.iter().fold((0.0, 0.0, 0.0), |(v, e, r), s| (v + s.value, e + s.err, r + s.reducible()));
    if !value.is_finite() {
        return Err(Error::Quadrature { achieved: f64::INFINITY, requested: tol.target(0.0) });
    }
    // errors at the round-off floor count as converged
    if reducible > tol.target(value) {
        return Err(Error::Quadrature { achieved: abs_err, requested: tol.target(value) });
    }
    Ok(Integral { value: sign * value, abs_err, evaluations })
}

/// Composite Simpson rule on each breakpoint panel, doubling the panel count
/// until the Richardson estimate |S_2n - S_n| / 15 meets the tolerance.
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: Tolerance) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_err: 0.0, evaluations: 0 });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut nodes: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > lo && p < hi).collect();
    nodes.push(lo);
    nodes.push(hi);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();

    let mut n = 16usize;
    let mut prev = simpson_pass(&mut f, &nodes, n);
    let mut evaluations = (nodes.len() - 1) * (n + 1);
    loop {
        n *= 2;
        let cur = simpson_pass(&mut f, &nodes, n);
        evaluations += (nodes.len() - 1) * (n + 1);
        let err = (cur - prev).abs() / 15.0;
        if err <= tol.target(cur) {
            return Ok(Integral { value: sign * cur, abs_err: err, evaluations });
        }
        if n >= tol.max_subdivisions.max(16) * 64 {
            return Err(Error::Quadrature { achieved: err, requested: tol.target(cur) });
        }
        prev = cur;
    }
}

fn simpson_pass<F: FnMut(f64) -> f64>(f: &mut F, nodes: &[f64], n: usize) -> f64 {
    nodes
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / n as f64;
            let mut s = f(w[0]) + f(w[1]);
            for i in 1..n {
                let c = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += c * f(w[0] + i as f64 * h);
            }
            s * h / 3.0
        })
        .sum()
}

/// Dispatch on [`Scheme`].
pub fn integrate_with<F: FnMut(f64) -> f64>(
    scheme: Scheme,
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Integral> {
    match scheme {
        Scheme::AdaptiveGK => integrate(f, a, b, breakpoints, tol),
        Scheme::CompositeSimpson => simpson(f, a, b, breakpoints, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weights_sum_to_interval_length() {
        let k: f64 = 2.0 * WGK[..10].iter().sum::<f64>() + WGK[10];
        let g: f64 = 2.0 * WG.iter().sum::<f64>();
        assert_relative_eq!(k, 2.0, epsilon = 1e-15);
        assert_relative_eq!(g, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn kronrod_panel_is_exact_for_degree_31() {
        // the 21-point Kronrod rule integrates polynomials of degree <= 31 exactly
        for deg in [0u32, 5, 20, 30, 31] {
            let (v, _) = gk21(&mut |x: f64| x.powi(deg as i32) * (deg as f64 + 1.0), 0.0, 1.0);
            assert_relative_eq!(v, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn gauss_subrule_is_exact_for_degree_19() {
        let mut g = 0.0;
        for j in 0..5 {
            let x = XGK[2 * j + 1];
            g += WG[j] * (x.powi(18) + (-x).powi(18));
        }
        assert_relative_eq!(g, 2.0 / 19.0, epsilon = 1e-14);
    }

    #[test]
    fn adaptive_handles_narrow_peak_with_breakpoint() {
        let s = 1e-3;
        let f = |x: f64| (-0.5 * ((x - 0.3) / s).powi(2)).exp() / (s * crate::special::SQRT_2PI);
        let r = integrate(f, -10.0, 10.0, &[0.3 - 10.0 * s, 0.3 - 3.0 * s, 0.3, 0.3 + 3.0 * s, 0.3 + 10.0 * s], Tolerance::new(1e-12, 1e-12)).unwrap();
        assert_relative_eq!(r.value, 1.0, epsilon = 1e-11);
    }

    #[test]
    fn adaptive_handles_kink() {
        let r = integrate(|x: f64| x.abs(), -1.0, 2.0, &[], Tolerance::new(1e-12, 0.0)).unwrap();
        assert_relative_eq!(r.value, 2.5, epsilon = 1e-11);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let r = integrate(|x: f64| x.exp(), 1.0, 0.0, &[], Tolerance::new(1e-13, 0.0)).unwrap();
        assert_relative_eq!(r.value, 1.0 - std::f64::consts::E, epsilon = 1e-13);
    }

    #[test]
    fn non_convergence_reports_achieved_error() {
        let mut tol = Tolerance::new(1e-15, 0.0);
        tol.max_subdivisions = 3;
        let err = integrate(|x: f64| (1.0 / x.abs().max(1e-300)).sqrt(), -1.0, 1.0, &[], tol).unwrap_err();
        match err {
            Error::Quadrature { achieved, requested } => assert!(achieved > requested),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn simpson_agrees_with_gk() {
        let f = |x: f64| (x * x).sin() * (-x).exp();
        let a = integrate(f, 0.0, 4.0, &[], Tolerance::new(1e-12, 0.0)).unwrap();
        let b = simpson(f, 0.0, 4.0, &[1.0], Tolerance::new(1e-10, 0.0)).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
    }
}
