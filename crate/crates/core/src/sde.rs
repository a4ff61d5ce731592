//! Coefficients of `dX = a dt + b dB + int c(t, X-, z) N~(dt, dz)`, the
//! per-interval variance of the removed small jumps and the compensator of
//! the simulated large jumps.

use std::fmt;
use std::str::FromStr;

use crate::cutting::Cutting;
use crate::dc::integrate_over_time;
use crate::error::{domain, Result};
use crate::levy::{LevyMeasure, Side};

pub trait Coefficients: Send + Sync + fmt::Debug {
    fn drift(&self, t: f64, x: f64) -> f64;

    fn diffusion(&self, t: f64, x: f64) -> f64;

    /// Jump response to a signed jump `z`.
    fn jump(&self, t: f64, x: f64, z: f64) -> f64;

    /// `Some(g)` when `c(t, x, z) = g(t, x) z`; this unlocks closed forms
    /// `int c^2 dnu = g^2 int z^2 dnu`.
    fn jump_scale(&self, _t: f64, _x: f64) -> Option<f64> {
        None
    }

    /// `z -> c(t, x, z)` is odd, so a symmetric measure needs no compensator.
    fn jump_is_odd(&self) -> bool {
        false
    }

    /// None of the coefficients depends on `t`.
    fn time_homogeneous(&self) -> bool {
        false
    }
}

/// `a(x) = sin x`, `b = 0`, `c(x, z) = cos(x) z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SinCos;

impl Coefficients for SinCos {
    fn drift(&self, _t: f64, x: f64) -> f64 {
        x.sin()
    }

    fn diffusion(&self, _t: f64, _x: f64) -> f64 {
        0.0
    }

    fn jump(&self, _t: f64, x: f64, z: f64) -> f64 {
        x.cos() * z
    }

    fn jump_scale(&self, _t: f64, x: f64) -> Option<f64> {
        Some(x.cos())
    }

    fn jump_is_odd(&self) -> bool {
        true
    }

    fn time_homogeneous(&self) -> bool {
        true
    }
}

/// Coefficients assembled from closures.
pub struct FnCoefficients<A, B, C> {
    pub drift: A,
    pub diffusion: B,
    pub jump: C,
    pub odd: bool,
}

impl<A, B, C> fmt::Debug for FnCoefficients<A, B, C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCoefficients").field("odd", &self.odd).finish_non_exhaustive()
    }
}

impl<A, B, C> Coefficients for FnCoefficients<A, B, C>
where
    A: Fn(f64, f64) -> f64 + Send + Sync,
    B: Fn(f64, f64) -> f64 + Send + Sync,
    C: Fn(f64, f64, f64) -> f64 + Send + Sync,
{
    fn drift(&self, t: f64, x: f64) -> f64 {
        (self.drift)(t, x)
    }

    fn diffusion(&self, t: f64, x: f64) -> f64 {
        (self.diffusion)(t, x)
    }

    fn jump(&self, t: f64, x: f64, z: f64) -> f64 {
        (self.jump)(t, x, z)
    }

    fn jump_is_odd(&self) -> bool {
        self.odd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SigmaMode {
    /// Left-endpoint rule `g(t0, x)^2 (t1 - t0) sum_± int_0^{r(t0)} z^2 dnu`.
    #[default]
    ClosedForm,
    /// Nested quadrature over time and the removed region.
    Quadrature,
    /// Forces `sigma = 0`.
    Disabled,
}

impl FromStr for SigmaMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "closed-form" => Ok(SigmaMode::ClosedForm),
            "quadrature" => Ok(SigmaMode::Quadrature),
            "disabled" | "off" => Ok(SigmaMode::Disabled),
            other => Err(format!("unknown sigma mode {other:?} (expected \"closed-form\" or \"quadrature\")")),
        }
    }
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaMode::ClosedForm => "closed-form",
            SigmaMode::Quadrature => "quadrature",
            SigmaMode::Disabled => "disabled",
        })
    }
}

fn removed_c_squared(coeffs: &dyn Coefficients, model: &dyn LevyMeasure, cutting: &dyn Cutting, x: f64, s: f64) -> Result<f64> {
    let mut total = 0.0;
    for side in Side::BOTH {
        let r = cutting.threshold(model, side, s)?;
        if r <= 0.0 {
            continue;
        }
        total += match coeffs.jump_scale(s, x) {
            Some(g) => g * g * model.moment_between(side, 2.0, 0.0, r),
            None => model.restricted_integral(side, &|z| coeffs.jump(s, x, z).powi(2), 0.0, r)?,
        };
    }
    Ok(total)
}

/// Variance of the Gaussian standing in for the removed jumps on
/// `[t0, t1]`, with the state frozen at `x`.
///
/// [`SigmaMode::ClosedForm`] falls back to quadrature when the coefficients
/// do not factor as `g(t, x) z`.
pub fn sigma_small_sq(
    coeffs: &dyn Coefficients,
    model: &dyn LevyMeasure,
    cutting: &dyn Cutting,
    x: f64,
    t0: f64,
    t1: f64,
    mode: SigmaMode,
) -> Result<f64> {
    if !(t0 >= 0.0 && t1 >= t0) {
        return Err(domain(format!("variance interval must satisfy 0 <= t0 <= t1, got [{t0}, {t1}]")));
    }
    if t1 == t0 {
        return Ok(0.0);
    }
    let v = match mode {
        SigmaMode::Disabled => 0.0,
        SigmaMode::ClosedForm if coeffs.jump_scale(t0, x).is_some() => {
            (t1 - t0) * removed_c_squared(coeffs, model, cutting, x, t0)?
        }
        _ => integrate_over_time(t0, t1, |s| removed_c_squared(coeffs, model, cutting, x, s))?,
    };
    Ok(v.max(0.0))
}

/// `int_{t0}^{t1} int_{large} c(s, x, z) nu(dz) ds`, subtracted from each
/// Euler step so that the simulated large jumps are compensated.
pub fn large_jump_compensator(
    coeffs: &dyn Coefficients,
    model: &dyn LevyMeasure,
    cutting: &dyn Cutting,
    x: f64,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if !(t0 >= 0.0 && t1 >= t0) {
        return Err(domain(format!("compensator interval must satisfy 0 <= t0 <= t1, got [{t0}, {t1}]")));
    }
    if t1 == t0 || (model.is_symmetric() && coeffs.jump_is_odd()) {
        return Ok(0.0);
    }
    if coeffs.time_homogeneous() {
        if let Some(g) = coeffs.jump_scale(t0, x) {
            return Ok(g * cutting.large_jump_drift(model, t0, t1)?);
        }
    }
    integrate_over_time(t0, t1, |s| {
        let mut total = 0.0;
        for side in Side::BOTH {
            let r = cutting.threshold(model, side, s)?;
            total += match coeffs.jump_scale(s, x) {
                Some(g) => g * side.sign() * model.moment_between(side, 1.0, r, f64::INFINITY),
                None => model.restricted_integral(side, &|z| coeffs.jump(s, x, z), r, f64::INFINITY)?,
            };
        }
        Ok(total)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{ArParams, FixedCut};
    use crate::dc::{CutParams, DynamicCut};
    use crate::levy::TruncatedStable;
    use crate::quad::{integrate, integrate_log, Tolerance};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn dc() -> DynamicCut {
        DynamicCut::new(CutParams::new(0.1, 1e-3, 1.0).unwrap())
    }

    #[test]
    fn cosine_zero_kills_variance() {
        let m = TruncatedStable::new(1.5).unwrap();
        for mode in [SigmaMode::ClosedForm, SigmaMode::Quadrature] {
            let v = sigma_small_sq(&SinCos, &m, &dc(), FRAC_PI_2, 0.2, 0.3, mode).unwrap();
            assert!(v < 1e-30, "{mode}: {v}");
        }
    }

    #[test]
    fn closed_form_is_left_endpoint_rule() {
        for a in [0.5, 1.0, 1.5] {
            let m = TruncatedStable::new(a).unwrap();
            let cut = dc();
            let (t0, t1) = (0.25, 0.375);
            let r = m.tau(Side::Pos, (t0 * 1e-3f64).powf(0.1)).unwrap();
            let expected = 2.0 * (t1 - t0) * r.powf(2.0 - a) / (2.0 - a);
            let v = sigma_small_sq(&SinCos, &m, &cut, 0.0, t0, t1, SigmaMode::ClosedForm).unwrap();
            assert_relative_eq!(v, expected, max_relative = 1e-12);
            let x = 0.7;
            let vx = sigma_small_sq(&SinCos, &m, &cut, x, t0, t1, SigmaMode::ClosedForm).unwrap();
            assert_relative_eq!(vx, x.cos().powi(2) * expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form() {
        let m = TruncatedStable::new(1.2).unwrap();
        // constant threshold: both paths are exact
        let ar = FixedCut::new(ArParams::new(0.01, 1.0).unwrap());
        let a = sigma_small_sq(&SinCos, &m, &ar, 0.3, 0.1, 0.6, SigmaMode::ClosedForm).unwrap();
        let b = sigma_small_sq(&SinCos, &m, &ar, 0.3, 0.1, 0.6, SigmaMode::Quadrature).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-6);
        // moving threshold: the left-endpoint rule is accurate on a short interval
        let (t0, t1) = (0.5, 0.5 + 1e-6);
        let a = sigma_small_sq(&SinCos, &m, &dc(), 0.3, t0, t1, SigmaMode::ClosedForm).unwrap();
        let b = sigma_small_sq(&SinCos, &m, &dc(), 0.3, t0, t1, SigmaMode::Quadrature).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-6);
    }

    #[test]
    fn generic_coefficients_use_measure_quadrature() {
        let m = TruncatedStable::new(0.8).unwrap();
        let generic = FnCoefficients { drift: |_, x: f64| x.sin(), diffusion: |_, _| 0.0, jump: |_, x: f64, z: f64| x.cos() * z, odd: true };
        let a = sigma_small_sq(&generic, &m, &dc(), 0.4, 0.1, 0.9, SigmaMode::ClosedForm).unwrap();
        let b = sigma_small_sq(&SinCos, &m, &dc(), 0.4, 0.1, 0.9, SigmaMode::Quadrature).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-7);
    }

    #[test]
    fn quadrature_is_additive() {
        let m = TruncatedStable::new(1.5).unwrap();
        let cut = dc();
        let f = |t0, t1| sigma_small_sq(&SinCos, &m, &cut, 0.2, t0, t1, SigmaMode::Quadrature).unwrap();
        let whole = f(0.0, 1.0);
        let parts = f(0.0, 0.37) + f(0.37, 1.0);
        assert!(whole > 0.0);
        assert_relative_eq!(whole, parts, max_relative = 1e-9);
    }

    #[test]
    fn degenerate_intervals() {
        let m = TruncatedStable::new(1.0).unwrap();
        assert_eq!(sigma_small_sq(&SinCos, &m, &dc(), 0.0, 0.4, 0.4, SigmaMode::ClosedForm).unwrap(), 0.0);
        assert_eq!(large_jump_compensator(&SinCos, &m, &dc(), 0.0, 0.4, 0.4).unwrap(), 0.0);
        assert!(sigma_small_sq(&SinCos, &m, &dc(), 0.0, 0.5, 0.4, SigmaMode::ClosedForm).is_err());
    }

    #[test]
    fn symmetric_compensator_vanishes() {
        let m = TruncatedStable::new(1.5).unwrap();
        assert_eq!(large_jump_compensator(&SinCos, &m, &dc(), 0.3, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn one_sided_compensator_matches_oracle() {
        let a = 0.7;
        let m = TruncatedStable::one_sided(a).unwrap();
        let identity = FnCoefficients { drift: |_, _| 0.0, diffusion: |_, _| 0.0, jump: |_, _, z: f64| z, odd: true };
        let tol = Tolerance::new(1e-13, 1e-12);
        // oracle: int_{t0}^{t1} int_{r(s)}^1 z^{-a} dz ds
        let cut = dc();
        let oracle = |t0: f64, t1: f64| {
            integrate(
                |s: f64| {
                    let r = m.tau(Side::Pos, (s * 1e-3f64).powf(0.1)).unwrap();
                    integrate_log(|z: f64| z.powf(-a), r, 1.0, tol).unwrap().value
                },
                t0,
                t1,
                tol,
            )
            .unwrap()
            .value
        };
        for (t0, t1) in [(0.0, 0.01), (0.2, 0.9)] {
            let c = large_jump_compensator(&identity, &m, &cut, 0.0, t0, t1).unwrap();
            assert_relative_eq!(c, oracle(t0, t1), max_relative = 1e-8);
        }
        // factorized fast path agrees with the generic one
        let ar = FixedCut::new(ArParams::new(0.05, 1.0).unwrap());
        let fast = large_jump_compensator(&SinCos, &m, &ar, 0.3, 0.1, 0.5).unwrap();
        let slow = large_jump_compensator(
            &FnCoefficients { drift: |_, _| 0.0, diffusion: |_, _| 0.0, jump: |_, x: f64, z: f64| x.cos() * z, odd: true },
            &m,
            &ar,
            0.3,
            0.1,
            0.5,
        )
        .unwrap();
        assert_relative_eq!(fast, slow, max_relative = 1e-8);
        assert_relative_eq!(fast, 0.3f64.cos() * 0.4 * (1.0 - 0.05f64.powf(1.0 - a)) / (1.0 - a), max_relative = 1e-12);
    }
}
