//! One-dimensional Levy measures seen through the quantities the cutting
//! schemes need: one-sided tails `N(r)`, their generalized inverses
//! `tau(t) = sup { r >= 0 : N(r) >= 1/t }`, truncated moments, Pruitt
//! functions and quadrature against the restricted measure.
//!
//! Every capability has a numeric default built on the one-sided density;
//! models with analytic expressions override them.

use std::fmt;

use crate::error::{domain, Error, Result};
use crate::quad::{integrate_log, Tolerance};

/// Quadrature tolerance shared by the numeric fallbacks.
pub const MEASURE_TOL: Tolerance = Tolerance::new(1e-10, 1e-10);

const BISECTION_START: f64 = 1e-15;
const PLATEAU_PROBE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Pos,
    Neg,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Pos, Side::Neg];

    pub fn sign(self) -> f64 {
        match self {
            Side::Pos => 1.0,
            Side::Neg => -1.0,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Pos => 0,
            Side::Neg => 1,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Pos => "+",
            Side::Neg => "-",
        })
    }
}

/// A Levy measure on the real line without an atom at the origin.
///
/// Methods take jump *magnitudes*: `density(Side::Neg, z)` is the density of
/// `nu` at `-z`. The unchecked methods assume their documented preconditions;
/// the free functions of this module validate arguments first.
pub trait LevyMeasure: Send + Sync + fmt::Debug {
    /// One-sided density of jump magnitudes at `z > 0`.
    fn density(&self, side: Side, z: f64) -> f64;

    /// Largest jump magnitude on `side`; infinite for unbounded support.
    fn support_radius(&self, side: Side) -> f64;

    /// Blumenthal-Getoor type exponent used for reference convergence rates.
    fn stability_index(&self) -> f64;

    /// `nu(A) = nu(-A)` for all Borel `A`.
    fn is_symmetric(&self) -> bool {
        false
    }

    /// Tails, inverses and moments are analytic.
    fn has_closed_forms(&self) -> bool {
        false
    }

    /// `N(r)`: mass of `(r, inf)` on `side`, for `r > 0`. Right-continuous,
    /// zero beyond the support, `+inf` if the mass is not finite.
    fn tail(&self, side: Side, r: f64) -> f64 {
        let edge = self.support_radius(side);
        if r >= edge {
            return 0.0;
        }
        integrate_log(|z| self.density(side, z), r, edge, MEASURE_TOL).map_or(f64::INFINITY, |e| e.value)
    }

    /// `tau(t)` for `t > 0`; `0` when the whole side has mass below `1/t`.
    fn tau(&self, side: Side, t: f64) -> Result<f64> {
        tau_by_bisection(self, side, t)
    }

    /// `int_{r1 < z <= r2} z^p nu_side(dz)`; `+inf` when divergent.
    fn moment_between(&self, side: Side, p: f64, r1: f64, r2: f64) -> f64 {
        let hi = r2.min(self.support_radius(side));
        if r1 >= hi {
            return 0.0;
        }
        if r1 <= 0.0 && !vanishes_at_origin(|z| z.powf(p + 1.0) * self.density(side, z)) {
            return f64::INFINITY;
        }
        integrate_log(|z| z.powf(p) * self.density(side, z), r1.max(0.0), hi, MEASURE_TOL)
            .map_or(f64::INFINITY, |e| e.value)
    }

    /// `int g(z) nu(dz)` over signed `z` with `r1 < |z| <= r2` on `side`.
    fn restricted_integral(&self, side: Side, g: &dyn Fn(f64) -> f64, r1: f64, r2: f64) -> Result<f64> {
        let hi = r2.min(self.support_radius(side));
        if r1 >= hi {
            return Ok(0.0);
        }
        let s = side.sign();
        integrate_log(|z| g(s * z) * self.density(side, z), r1.max(0.0), hi, MEASURE_TOL).map(|e| e.value)
    }

    /// A side carrying no mass at all.
    fn is_null_side(&self, side: Side) -> bool {
        self.tail(side, f64::MIN_POSITIVE) == 0.0
    }
}

/// `h(z) = z * integrand(z)` must shrink towards the origin for the integral
/// over `(0, r]` to be finite; probed on a few decades far below any scale of
/// interest.
fn vanishes_at_origin<H: Fn(f64) -> f64>(h: H) -> bool {
    let probes = [h(1e-30), h(1e-60), h(1e-90)];
    probes.iter().all(|v| v.is_finite()) && probes[2].abs() < probes[1].abs().max(1e-300) && probes[1].abs() < probes[0].abs().max(1e-300)
        || probes.iter().all(|&v| v == 0.0)
}

/// Generalized inverse of the tail by bisection.
///
/// The bracket starts at `[1e-15, support radius]` and is widened
/// geometrically until it straddles the level `1/t`. Ties resolve to the
/// supremum. A tail that stays flat just left of the solution is reported as
/// [`Error::FlatTail`].
pub fn tau_by_bisection<M: LevyMeasure + ?Sized>(model: &M, side: Side, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("tau needs t > 0, got {t}")));
    }
    if t.is_infinite() {
        return Ok(model.support_radius(side));
    }
    let level = 1.0 / t;
    let holds = |r: f64| model.tail(side, r) >= level;

    let mut lo = BISECTION_START;
    while !holds(lo) {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Ok(0.0);
        }
    }
    let edge = model.support_radius(side);
    let mut hi = if edge.is_finite() { edge } else { lo.max(1.0) };
    while holds(hi) {
        if edge.is_finite() {
            // N(edge) = 0 < level, so only an unbounded support gets here.
            return Ok(edge);
        }
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoBracket(format!("tau at t = {t}: tail never drops below 1/t")));
        }
    }
    for _ in 0..2000 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let at = model.tail(side, lo);
    let left = model.tail(side, lo * (1.0 - PLATEAU_PROBE));
    if at > 0.0 && at.is_finite() && left - at <= 1e-9 * at {
        return Err(Error::FlatTail { level });
    }
    Ok(lo)
}

/// `nu(dz) = w_± 1_{|z| <= 1} |z|^{-1-alpha} dz` with all closed forms.
///
/// The default weights are `w_+ = w_- = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedStable {
    alpha: f64,
    weights: [f64; 2],
}

impl TruncatedStable {
    pub fn new(alpha: f64) -> Result<Self> {
        Self::with_weights(alpha, 1.0, 1.0)
    }

    pub fn with_weights(alpha: f64, pos: f64, neg: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(domain(format!("stability index must lie in (0, 2), got {alpha}")));
        }
        if !(pos >= 0.0 && neg >= 0.0) || !pos.is_finite() || !neg.is_finite() {
            return Err(domain(format!("side weights must be finite and nonnegative, got ({pos}, {neg})")));
        }
        Ok(Self { alpha, weights: [pos, neg] })
    }

    /// Only upward jumps.
    pub fn one_sided(alpha: f64) -> Result<Self> {
        Self::with_weights(alpha, 1.0, 0.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weight(&self, side: Side) -> f64 {
        self.weights[side.index()]
    }
}

impl LevyMeasure for TruncatedStable {
    fn density(&self, side: Side, z: f64) -> f64 {
        if z > 0.0 && z <= 1.0 {
            self.weight(side) * z.powf(-1.0 - self.alpha)
        } else {
            0.0
        }
    }

    fn support_radius(&self, side: Side) -> f64 {
        if self.weight(side) > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn stability_index(&self) -> f64 {
        self.alpha
    }

    fn is_symmetric(&self) -> bool {
        self.weights[0] == self.weights[1]
    }

    fn has_closed_forms(&self) -> bool {
        true
    }

    fn tail(&self, side: Side, r: f64) -> f64 {
        let w = self.weight(side);
        if w == 0.0 || r >= 1.0 {
            return 0.0;
        }
        if r <= 0.0 {
            return f64::INFINITY;
        }
        // (r^{-a} - 1)/a without cancellation near r = 1
        w * (-self.alpha * r.ln()).exp_m1() / self.alpha
    }

    fn tau(&self, side: Side, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(domain(format!("tau needs t > 0, got {t}")));
        }
        Ok(self.tau_unchecked(side, t))
    }

    fn moment_between(&self, side: Side, p: f64, r1: f64, r2: f64) -> f64 {
        let w = self.weight(side);
        let hi = r2.min(1.0);
        let lo = r1.max(0.0);
        if w == 0.0 || lo >= hi {
            return 0.0;
        }
        let k = p - self.alpha;
        if lo == 0.0 {
            return if k > 0.0 { w * hi.powf(k) / k } else { f64::INFINITY };
        }
        if k == 0.0 {
            w * (hi / lo).ln()
        } else {
            w * (hi.powf(k) - lo.powf(k)) / k
        }
    }

    fn is_null_side(&self, side: Side) -> bool {
        self.weight(side) == 0.0
    }
}

impl TruncatedStable {
    /// Closed-form `tau`; `0` for `t <= 0` or a null side.
    #[inline]
    pub fn tau_unchecked(&self, side: Side, t: f64) -> f64 {
        let w = self.weight(side);
        if w == 0.0 || t <= 0.0 {
            return 0.0;
        }
        if t.is_infinite() {
            return 1.0;
        }
        // r^{-a} = 1 + a/(w t)
        (-(self.alpha / (w * t)).ln_1p() / self.alpha).exp()
    }
}

/// A measure given only by its one-sided densities; every capability uses
/// the numeric fallbacks. This is the library extension point for
/// user-supplied measures.
pub struct DensityModel<F> {
    density: F,
    support: [f64; 2],
    alpha: f64,
    symmetric: bool,
}

impl<F> DensityModel<F>
where
    F: Fn(Side, f64) -> f64 + Send + Sync,
{
    pub fn new(density: F, support_pos: f64, support_neg: f64, alpha: f64) -> Result<Self> {
        if !(support_pos >= 0.0 && support_neg >= 0.0) {
            return Err(domain("support radii must be nonnegative"));
        }
        Ok(Self { density, support: [support_pos, support_neg], alpha, symmetric: false })
    }

    pub fn symmetric(mut self, symmetric: bool) -> Self {
        self.symmetric = symmetric;
        self
    }
}

impl<F> fmt::Debug for DensityModel<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DensityModel")
            .field("support", &self.support)
            .field("alpha", &self.alpha)
            .field("symmetric", &self.symmetric)
            .finish_non_exhaustive()
    }
}

impl<F> LevyMeasure for DensityModel<F>
where
    F: Fn(Side, f64) -> f64 + Send + Sync,
{
    fn density(&self, side: Side, z: f64) -> f64 {
        if z > 0.0 && z <= self.support[side.index()] {
            (self.density)(side, z)
        } else {
            0.0
        }
    }

    fn support_radius(&self, side: Side) -> f64 {
        self.support[side.index()]
    }

    fn stability_index(&self) -> f64 {
        self.alpha
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }
}

/// Checked `N^±(r)`.
pub fn tail<M: LevyMeasure + ?Sized>(model: &M, side: Side, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(domain(format!("tail needs r > 0, got {r}")));
    }
    Ok(model.tail(side, r))
}

/// Checked `tau^±(t)`.
pub fn tau<M: LevyMeasure + ?Sized>(model: &M, side: Side, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("tau needs t > 0, got {t}")));
    }
    model.tau(side, t)
}

/// `max(tau^+(t), tau^-(t))`.
pub fn tau_max<M: LevyMeasure + ?Sized>(model: &M, t: f64) -> Result<f64> {
    Ok(tau(model, Side::Pos, t)?.max(tau(model, Side::Neg, t)?))
}

/// `int_{0 < |z| <= r} |z|^p nu(dz)` over both sides.
pub fn truncated_abs_moment<M: LevyMeasure + ?Sized>(model: &M, p: f64, r: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(domain(format!("moment order must be >= 0, got {p}")));
    }
    if !(r > 0.0) {
        return Err(domain(format!("truncation radius must be > 0, got {r}")));
    }
    let m: f64 = Side::BOTH.iter().map(|&s| model.moment_between(s, p, 0.0, r)).sum();
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Integrability(format!("|z|^{p} is not integrable near the origin")))
    }
}

/// Pruitt function `psi^±(xi) = xi^2 int_{0 < z <= 1/xi} z^2 nu^±(dz)`.
pub fn pruitt_psi<M: LevyMeasure + ?Sized>(model: &M, side: Side, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(domain(format!("Pruitt function needs xi > 0, got {xi}")));
    }
    let m = model.moment_between(side, 2.0, 0.0, 1.0 / xi);
    if !m.is_finite() {
        return Err(Error::Integrability("second moment near the origin".into()));
    }
    Ok(xi * xi * m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruittReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// Grid points (per side) where the tail vanishes and no ratio is formed.
    pub skipped: usize,
}

impl PruittReport {
    pub fn is_bounded(&self) -> bool {
        self.min_ratio.is_finite() && self.max_ratio.is_finite() && self.min_ratio > 0.0
    }
}

/// Range of `N^±(r) / psi^±(1/r)` over `r_grid`, both sides pooled.
pub fn check_tail_pruitt_equivalence<M: LevyMeasure + ?Sized>(model: &M, r_grid: &[f64]) -> Result<PruittReport> {
    if r_grid.is_empty() {
        return Err(domain("radius grid is empty"));
    }
    if let Some(&bad) = r_grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(domain(format!("radii must lie in (0, 1], got {bad}")));
    }
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    let mut skipped = 0;
    for side in Side::BOTH {
        for &r in r_grid {
            let n = model.tail(side, r);
            if n == 0.0 {
                skipped += 1;
                continue;
            }
            let ratio = n / pruitt_psi(model, side, 1.0 / r)?;
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    if skipped == 2 * r_grid.len() {
        return Err(Error::DegenerateModel("tail vanishes on the whole radius grid".into()));
    }
    Ok(PruittReport { min_ratio, max_ratio, skipped })
}

/// Largest value of `tau(R t) / (R^zeta tau(t))` over the sampled pairs;
/// the scaling bound holds on the sample when this is `<= 1`.
pub fn tau_scaling_margin<M: LevyMeasure + ?Sized>(model: &M, zeta: f64, pairs: &[(f64, f64)]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &(t, big_r) in pairs {
        if !(big_r > 1.0) {
            return Err(domain(format!("scaling factor must exceed 1, got {big_r}")));
        }
        let base = tau_max(model, t)?;
        if base == 0.0 {
            continue;
        }
        worst = worst.max(tau_max(model, big_r * t)? / (big_r.powf(zeta) * base));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate;
    use approx::assert_relative_eq;

    fn stable(a: f64) -> TruncatedStable {
        TruncatedStable::new(a).unwrap()
    }

    fn quad_tail(a: f64, r: f64) -> f64 {
        integrate(|z: f64| z.powf(-1.0 - a), r, 1.0, Tolerance::new(1e-13, 1e-13)).unwrap().value
    }

    #[test]
    fn tail_examples() {
        assert_relative_eq!(tail(&stable(1.0), Side::Pos, 0.5).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(quad_tail(1.0, 0.5), 1.0, max_relative = 1e-10);
        assert_eq!(tail(&stable(1.0), Side::Pos, 1.0).unwrap(), 0.0);
        assert_relative_eq!(tail(&stable(0.5), Side::Neg, 0.25).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(quad_tail(0.5, 0.25), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn nonpositive_arguments_are_domain_errors() {
        let m = stable(1.0);
        assert!(matches!(tail(&m, Side::Pos, 0.0), Err(Error::Domain(_))));
        assert!(matches!(tail(&m, Side::Pos, -1.0), Err(Error::Domain(_))));
        assert!(matches!(tau(&m, Side::Pos, 0.0), Err(Error::Domain(_))));
        assert!(matches!(pruitt_psi(&m, Side::Pos, 0.0), Err(Error::Domain(_))));
        assert!(TruncatedStable::new(2.0).is_err());
        assert!(TruncatedStable::new(0.0).is_err());
    }

    #[test]
    fn tau_examples_against_bisection() {
        let m = stable(1.0);
        assert_relative_eq!(tau(&m, Side::Pos, 1.0).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(tau_by_bisection(&m, Side::Pos, 1.0).unwrap(), 0.5, max_relative = 1e-12);
        let m = stable(0.5);
        assert_relative_eq!(tau(&m, Side::Pos, 1.0).unwrap(), 4.0 / 9.0, max_relative = 1e-15);
        assert_relative_eq!(tau_by_bisection(&m, Side::Neg, 1.0).unwrap(), 4.0 / 9.0, max_relative = 1e-12);
    }

    #[test]
    fn tau_tends_to_support_edge() {
        let m = stable(1.3);
        assert!(m.tau(Side::Pos, 1e12).unwrap() > 0.999_999);
        assert!(m.tau(Side::Pos, 1e12).unwrap() < 1.0);
    }

    #[test]
    fn pruitt_examples() {
        let m = stable(1.0);
        assert_relative_eq!(pruitt_psi(&m, Side::Pos, 2.0).unwrap(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(pruitt_psi(&m, Side::Pos, 1.0).unwrap(), 1.0, max_relative = 1e-14);
        // xi -> 0: radius 1/xi beyond the support, psi/xi^2 -> total second moment
        let tiny = 1e-6;
        assert_relative_eq!(pruitt_psi(&m, Side::Pos, tiny).unwrap() / (tiny * tiny), 1.0, max_relative = 1e-14);
        let q = integrate(|z: f64| z * z * z.powf(-2.0), 0.0, 0.5, Tolerance::default()).unwrap().value;
        assert_relative_eq!(4.0 * q, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn pruitt_band_is_bounded() {
        let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        for a in [1.0, 1.5] {
            let rep = check_tail_pruitt_equivalence(&stable(a), &grid).unwrap();
            assert!(rep.is_bounded(), "{rep:?}");
            // direct evaluation: ratio = (2-a)(1 - r^a)/a
            let direct: Vec<f64> = grid.iter().map(|&r| (2.0 - a) * (1.0 - f64::powf(r, a)) / a).collect();
            let lo = direct.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = direct.iter().cloned().fold(0.0, f64::max);
            assert_relative_eq!(rep.min_ratio, lo, max_relative = 1e-12);
            assert_relative_eq!(rep.max_ratio, hi, max_relative = 1e-12);
        }
    }

    #[test]
    fn null_measure_is_degenerate() {
        let m = TruncatedStable::with_weights(1.0, 0.0, 0.0).unwrap();
        let err = check_tail_pruitt_equivalence(&m, &[0.1, 0.5]).unwrap_err();
        assert!(matches!(err, Error::DegenerateModel(_)));
    }

    #[test]
    fn moments_against_quadrature() {
        let m = stable(0.8);
        for p in [1.0, 2.0, 2.5, 4.0] {
            for r in [0.05, 0.4, 1.0] {
                let closed = truncated_abs_moment(&m, p, r).unwrap();
                let q = 2.0 * integrate_log(|z: f64| z.powf(p - 1.8), 0.0, r, Tolerance::new(1e-13, 1e-12)).unwrap().value;
                assert_relative_eq!(closed, q, max_relative = 1e-8);
                assert_relative_eq!(closed, 2.0 * f64::powf(r, p - 0.8) / (p - 0.8), max_relative = 1e-13);
            }
        }
        assert!(matches!(truncated_abs_moment(&stable(1.2), 1.0, 0.5), Err(Error::Integrability(_))));
        // radius beyond the support clamps to the edge
        assert_relative_eq!(truncated_abs_moment(&m, 2.0, 5.0).unwrap(), 2.0 / 1.2, max_relative = 1e-14);
    }

    #[test]
    fn moment_between_log_case() {
        let m = stable(1.0);
        assert_relative_eq!(m.moment_between(Side::Pos, 1.0, 0.25, 1.0), 4f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn density_model_matches_closed_forms() {
        let a = 0.8;
        let numeric = DensityModel::new(move |_, z: f64| z.powf(-1.0 - a), 1.0, 1.0, a).unwrap().symmetric(true);
        let closed = stable(a);
        for r in [1e-3, 0.1, 0.7] {
            assert_relative_eq!(numeric.tail(Side::Pos, r), closed.tail(Side::Pos, r), max_relative = 1e-9);
        }
        for t in [1e-3, 0.3, 5.0] {
            assert_relative_eq!(numeric.tau(Side::Neg, t).unwrap(), closed.tau(Side::Neg, t).unwrap(), max_relative = 1e-8);
        }
        assert_relative_eq!(
            numeric.moment_between(Side::Pos, 2.0, 0.0, 0.3),
            closed.moment_between(Side::Pos, 2.0, 0.0, 0.3),
            max_relative = 1e-9
        );
    }

    #[test]
    fn plateau_is_reported() {
        // no mass in (0.4, 0.6): N is flat at N(0.6) there
        let m = DensityModel::new(|_, z: f64| if z > 0.4 && z <= 0.6 { 0.0 } else { z.powf(-2.0) }, 1.0, 1.0, 1.0).unwrap();
        let plateau_level = m.tail(Side::Pos, 0.5);
        let err = tau_by_bisection(&m, Side::Pos, 1.0 / plateau_level).unwrap_err();
        assert!(matches!(err, Error::FlatTail { .. }));
        // levels off the plateau are fine
        assert!(tau_by_bisection(&m, Side::Pos, 1.0).is_ok());
    }

    #[test]
    fn scaling_with_inverse_alpha() {
        let pairs: Vec<(f64, f64)> = (1..=20).flat_map(|i| [(i as f64 / 20.0, 1.5), (i as f64 / 20.0, 100.0)]).collect();
        for a in [0.5, 1.0, 1.5] {
            assert!(tau_scaling_margin(&stable(a), 1.0 / a, &pairs).unwrap() <= 1.0);
        }
    }
}
