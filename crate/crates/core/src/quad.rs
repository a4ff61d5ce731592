//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! Infinite limits are mapped onto finite ones with `x = a + (1 - t) / t`.
//! [`integrate_log`] integrates over `(r1, r2]` in the variable `v = ln z`,
//! which turns the `|z|^{-1-alpha}` blow-up of a Levy density at the origin
//! into exponential decay.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel, max_intervals: 4000 }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-10, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
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
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

fn segment<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let (value, error) = kronrod15(f, a, b);
    Segment { a, b, value, error }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    let mut heap = BinaryHeap::new();
    let first = segment(f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    heap.push(first);
    // Segments too narrow to split further are retired here.
    let mut retired_value = 0.0;
    let mut retired_error = 0.0;

    loop {
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::Quadrature { a, b, value, error });
        }
        if error <= tol.abs.max(tol.rel * value.abs()) {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Quadrature { a, b, value, error });
        }
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || (worst.b - worst.a) <= 4.0 * f64::EPSILON * mid.abs() {
            retired_value += worst.value;
            retired_error += worst.error;
            if heap.is_empty() {
                break;
            }
            continue;
        }
        let left = segment(f, worst.a, mid);
        let right = segment(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum from scratch to drop the drift of the running updates.
    let intervals = heap.len();
    let (mut v, mut e) = (retired_value, retired_error);
    for s in heap.into_iter() {
        v += s.value;
        e += s.error;
    }
    Ok(Estimate { value: v, error: e, intervals })
}

/// Integrates `f` over `[a, b]`; either limit may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate_dyn(&f, a, b, tol)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("integration limit is NaN".into()));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, intervals: 0 });
    }
    if a > b {
        let r = integrate_dyn(f, b, a, tol)?;
        return Ok(Estimate { value: -r.value, ..r });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&f, a, b, tol),
        (true, false) => {
            let g = |t: f64| {
                let x = a + (1.0 - t) / t;
                f(x) / (t * t)
            };
            adaptive(&g, 0.0, 1.0, tol)
        }
        (false, true) => {
            let g = |t: f64| {
                let x = b - (1.0 - t) / t;
                f(x) / (t * t)
            };
            adaptive(&g, 0.0, 1.0, tol)
        }
        (false, false) => {
            let left = integrate_dyn(f, f64::NEG_INFINITY, 0.0, tol)?;
            let right = integrate_dyn(f, 0.0, f64::INFINITY, tol)?;
            Ok(Estimate {
                value: left.value + right.value,
                error: left.error + right.error,
                intervals: left.intervals + right.intervals,
            })
        }
    }
}

/// Integrates `f` over `(r1, r2]` with `0 <= r1 < r2 <= inf` in the variable
/// `v = ln z`.
pub fn integrate_log<F: Fn(f64) -> f64>(f: F, r1: f64, r2: f64, tol: Tolerance) -> Result<Estimate> {
    if !(r1 >= 0.0) || r2 < r1 {
        return Err(Error::Domain(format!("log-quadrature needs 0 <= r1 <= r2, got ({r1}, {r2})")));
    }
    if r1 == r2 {
        return Ok(Estimate { value: 0.0, error: 0.0, intervals: 0 });
    }
    let g = |v: f64| {
        let z = v.exp();
        if z == 0.0 || !z.is_finite() {
            return 0.0;
        }
        let value = f(z) * z;
        // 0 * inf from under- or overflowing powers deep inside the origin
        // layer, where any integrable integrand is negligible
        if !value.is_finite() && z < 1e-100 {
            0.0
        } else {
            value
        }
    };
    integrate(g, r1.ln(), r2.ln(), tol)
}

/// Composite trapezoid rule on `intervals` equal pieces of `[a, b]`.
pub fn trapezoid<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    assert!(intervals > 0, "trapezoid rule needs at least one interval");
    let n = intervals as f64;
    let step = (b - a) / n;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..intervals {
        sum += f(a + (b - a) * (i as f64) / n);
    }
    sum * step
}
