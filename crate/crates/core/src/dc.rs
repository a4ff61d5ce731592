//! Dynamic cutting: at time `s` only jumps beyond `tau^±((s h)^eps)` are
//! simulated. The retained jumps on each side form an inhomogeneous compound
//! Poisson process with cumulative intensity
//! `lambda(t) = t^{1-eps} h^{-eps} / (1 - eps)`, independent of the measure,
//! and jump-size law `F_{th}` depending on time only through `t h`.
//!
//! Jump times come from the time change `T_i = lambda^{-1}(Gamma_i)` of unit
//! rate Poisson arrivals; sizes from the closed-form inverse of `F_{th}`.
//!
//! `F_{th}` is the law of a retained jump pooled over `(0, t]`. Drawing it at
//! each arrival time `t` ([`SizeLaw::Pooled`]) follows the published
//! algorithm; [`SizeLaw::Conditional`] instead draws from `nu` restricted
//! beyond the cut at the arrival time, which is the exact law of the
//! retained Poisson random measure.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::{Rng, RngCore};
use rand_distr::{Exp1, Open01};

use crate::cutting::{Cutting, JumpStream, Method};
use crate::error::{domain, Error, Result};
use crate::levy::{LevyMeasure, Side};
use crate::quad::{integrate, Tolerance};

/// Tolerance of the nested quadratures over time.
pub const TIME_QUAD_TOL: Tolerance = Tolerance::new(1e-9, 1e-9);

static EDGE_WARNED: AtomicBool = AtomicBool::new(false);

/// Law of the size of a jump arriving at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SizeLaw {
    /// `F_{th}`, the closed form with mass `eps` below the current cut.
    #[default]
    Pooled,
    /// `1 - (t h)^eps N(x)` for `x >= tau((t h)^eps)`.
    Conditional,
}

impl std::str::FromStr for SizeLaw {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "pooled" => Ok(Self::Pooled),
            "conditional" => Ok(Self::Conditional),
            other => Err(format!("unknown size law {other:?} (expected \"pooled\" or \"conditional\")")),
        }
    }
}

impl std::fmt::Display for SizeLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pooled => "pooled",
            Self::Conditional => "conditional",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutParams {
    epsilon: f64,
    h: f64,
    ln_h: f64,
    horizon: f64,
    size_law: SizeLaw,
}

impl CutParams {
    pub fn new(epsilon: f64, h: f64, horizon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(domain(format!("cut epsilon must lie in (0, 1), got {epsilon}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(domain(format!("cut scale h must be positive, got {h}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { epsilon, h, ln_h: h.ln(), horizon, size_law: SizeLaw::Pooled })
    }

    /// `h = n^{-1/eps}`, which makes the expected jump count per side on
    /// `[0, 1]` equal to `n / (1 - eps)`.
    pub fn n_power_h(n: f64, epsilon: f64) -> f64 {
        n.powf(-1.0 / epsilon)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn size_law(&self) -> SizeLaw {
        self.size_law
    }

    pub fn with_size_law(self, size_law: SizeLaw) -> Self {
        Self { size_law, ..self }
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Ok(Self::new(self.epsilon, self.h, horizon)?.with_size_law(self.size_law))
    }

    /// `(s h)^eps`, evaluated in logs so tiny `h` cannot underflow.
    pub fn cut_level(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else {
            (self.epsilon * (s.ln() + self.ln_h)).exp()
        }
    }

    /// Expected number of retained jumps per side on `(0, t]`.
    pub fn intensity(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let e = self.epsilon;
        ((1.0 - e) * t.ln() - e * self.ln_h).exp() / (1.0 - e)
    }

    /// Time at which the cumulative intensity reaches `u`.
    pub fn inverse_intensity(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let e = self.epsilon;
        ((u.ln() + (1.0 - e).ln() + e * self.ln_h) / (1.0 - e)).exp()
    }
}

/// `lambda^±(t)`; zero on a side without mass.
pub fn intensity_lambda(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("intensity needs t >= 0, got {t}")));
    }
    Ok(if model.is_null_side(side) { 0.0 } else { params.intensity(t) })
}

pub fn inverse_lambda(params: &CutParams, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(domain(format!("inverse intensity needs u >= 0, got {u}")));
    }
    Ok(params.inverse_intensity(u))
}

/// Maps unit-rate exponential gaps to jump times, stopping at the first
/// arrival whose image reaches the horizon.
pub fn jump_times_from_gaps<I: IntoIterator<Item = f64>>(params: &CutParams, gaps: I) -> Vec<f64> {
    let mut arrival = 0.0;
    let mut times = Vec::new();
    for gap in gaps {
        arrival += gap;
        let t = params.inverse_intensity(arrival);
        if !(t < params.horizon) {
            break;
        }
        times.push(t);
    }
    times
}

pub fn sample_jump_times<R: RngCore + ?Sized>(
    params: &CutParams,
    model: &dyn LevyMeasure,
    side: Side,
    rng: &mut R,
) -> Vec<f64> {
    if model.is_null_side(side) {
        return Vec::new();
    }
    let gaps = std::iter::repeat_with(|| rng.sample::<f64, _>(Exp1));
    jump_times_from_gaps(params, gaps)
}

fn log_th(params: &CutParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(domain(format!("jump-size law needs t > 0, got {t}")));
    }
    Ok(t.ln() + params.ln_h)
}

/// Distribution function of the magnitude of a jump arriving at time `t`.
pub fn jump_size_cdf(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, x: f64) -> Result<f64> {
    let ln_th = log_th(params, t)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let e = params.epsilon;
    let n = model.tail(side, x);
    let boundary = (-e * ln_th).exp();
    Ok(if n >= boundary {
        if n.is_infinite() {
            0.0
        } else {
            e * ((e - 1.0) * (ln_th + n.ln() / e)).exp()
        }
    } else {
        1.0 - (1.0 - e) * (e * ln_th).exp() * n
    })
}

/// Quantile of the jump-size law at time `t`; the branch `u <= eps` is the
/// lower one.
pub fn inverse_jump_size_cdf(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("quantile level must lie in (0, 1), got {u}")));
    }
    let ln_th = log_th(params, t)?;
    let e = params.epsilon;
    let level = if u <= e {
        (e * ln_th + e / (1.0 - e) * (u / e).ln()).exp()
    } else {
        (1.0 - e) * (e * ln_th).exp() / (1.0 - u)
    };
    let x = model.tau(side, level)?;
    if x >= model.support_radius(side) && !EDGE_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("cut threshold reaches the support edge at t = {t}; h is too large for this measure");
    }
    Ok(x)
}

/// Distribution function of the magnitude under the conditional law.
pub fn conditional_size_cdf(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, x: f64) -> Result<f64> {
    let ln_th = log_th(params, t)?;
    if x <= 0.0 || x < model.tau(side, (params.epsilon * ln_th).exp())? {
        return Ok(0.0);
    }
    Ok(1.0 - (params.epsilon * ln_th).exp() * model.tail(side, x))
}

pub fn inverse_conditional_size_cdf(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("quantile level must lie in (0, 1), got {u}")));
    }
    let level = (params.epsilon * log_th(params, t)?).exp() / (1.0 - u);
    model.tau(side, level)
}

/// Distribution function of the size law selected in `params`.
pub fn size_cdf(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, x: f64) -> Result<f64> {
    match params.size_law {
        SizeLaw::Pooled => jump_size_cdf(params, model, side, t, x),
        SizeLaw::Conditional => conditional_size_cdf(params, model, side, t, x),
    }
}

/// Quantile of the size law selected in `params`.
pub fn size_quantile(params: &CutParams, model: &dyn LevyMeasure, side: Side, t: f64, u: f64) -> Result<f64> {
    match params.size_law {
        SizeLaw::Pooled => inverse_jump_size_cdf(params, model, side, t, u),
        SizeLaw::Conditional => inverse_conditional_size_cdf(params, model, side, t, u),
    }
}

pub fn sample_jump_sizes<R: RngCore + ?Sized>(
    params: &CutParams,
    model: &dyn LevyMeasure,
    side: Side,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    times
        .iter()
        .map(|&t| {
            let u: f64 = rng.sample(Open01);
            Ok(side.sign() * size_quantile(params, model, side, t, u)?)
        })
        .collect()
}

/// `tau^±((s h)^eps)`.
pub fn threshold(params: &CutParams, model: &dyn LevyMeasure, side: Side, s: f64) -> Result<f64> {
    let level = params.cut_level(s);
    if level <= 0.0 {
        Ok(0.0)
    } else {
        model.tau(side, level)
    }
}

/// Integrated first moment of the retained region; exactly zero for a
/// symmetric measure.
pub fn compensated_drift(params: &CutParams, model: &dyn LevyMeasure, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(domain(format!("drift needs t >= 0, got {t}")));
    }
    DynamicCut::new(*params).large_jump_drift(model, 0.0, t)
}

/// `sum_± int_{0 < z < tau^±((s h)^eps)} z^2 nu^±(dz)`.
pub fn small_jump_variance_rate(params: &CutParams, model: &dyn LevyMeasure, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(domain(format!("variance rate needs s > 0, got {s}")));
    }
    DynamicCut::new(*params).small_jump_variance_rate(model, s)
}

/// Nested quadrature `int_{t0}^{t1} inner(s) ds` where `inner` may fail.
pub(crate) fn integrate_over_time<F>(t0: f64, t1: f64, inner: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if t1 <= t0 {
        return Ok(0.0);
    }
    let failure = std::cell::RefCell::new(None);
    let est = integrate(
        |s| match inner(s) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                failure.borrow_mut().get_or_insert(Error::Integrability(format!("inner integral is {v} at s = {s}")));
                0.0
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        t0,
        t1,
        TIME_QUAD_TOL,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(est?.value)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicCut {
    pub params: CutParams,
}

impl DynamicCut {
    pub fn new(params: CutParams) -> Self {
        Self { params }
    }
}

impl Cutting for DynamicCut {
    fn method(&self) -> Method {
        Method::Dc
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn threshold(&self, model: &dyn LevyMeasure, side: Side, s: f64) -> Result<f64> {
        threshold(&self.params, model, side, s)
    }

    fn sample_jumps(&self, model: &dyn LevyMeasure, rng: &mut dyn RngCore) -> Result<JumpStream> {
        let pos_t = sample_jump_times(&self.params, model, Side::Pos, rng);
        let neg_t = sample_jump_times(&self.params, model, Side::Neg, rng);
        let pos_z = sample_jump_sizes(&self.params, model, Side::Pos, &pos_t, rng)?;
        let neg_z = sample_jump_sizes(&self.params, model, Side::Neg, &neg_t, rng)?;
        Ok(JumpStream::from_sides((&pos_t, &pos_z), (&neg_t, &neg_z)))
    }

    fn large_jump_drift(&self, model: &dyn LevyMeasure, t0: f64, t1: f64) -> Result<f64> {
        if model.is_symmetric() {
            return Ok(0.0);
        }
        integrate_over_time(t0, t1, |s| {
            let mut m = 0.0;
            for side in Side::BOTH {
                let r = self.threshold(model, side, s)?;
                m += side.sign() * model.moment_between(side, 1.0, r, f64::INFINITY);
            }
            Ok(m)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceComparison {
    pub r: f64,
    pub empirical: f64,
    pub quadrature: f64,
    pub rel_error: f64,
}

/// `int_0^t int_{u > tau^+((s h)^eps)} (1 - e^{-r u}) nu^+(du) ds`.
pub fn laplace_exponent(params: &CutParams, model: &dyn LevyMeasure, t: f64, r: f64) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let g = move |u: f64| -(-r * u).exp_m1();
    integrate_over_time(0.0, t, |s| {
        let cut = threshold(params, model, Side::Pos, s)?;
        model.restricted_integral(Side::Pos, &g, cut, f64::INFINITY)
    })
}

/// Compares `-ln` of the sample mean of `exp(-r Z)` for the upward
/// compound Poisson part at time `t` with its Laplace exponent.
pub fn empirical_laplace_check<R: RngCore + ?Sized>(
    params: &CutParams,
    model: &dyn LevyMeasure,
    t: f64,
    r_values: &[f64],
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<LaplaceComparison>> {
    if !(t > 0.0) {
        return Err(domain(format!("Laplace check needs t > 0, got {t}")));
    }
    if let Some(&bad) = r_values.iter().find(|&&r| !(r >= 0.0)) {
        return Err(domain(format!("Laplace argument must be >= 0, got {bad}")));
    }
    if n_samples == 0 {
        return Err(domain("Laplace check needs at least one sample"));
    }
    let local = params.with_horizon(t)?;
    let mut totals = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let times = sample_jump_times(&local, model, Side::Pos, rng);
        let sizes = sample_jump_sizes(&local, model, Side::Pos, &times, rng)?;
        totals.push(sizes.iter().sum::<f64>());
    }
    r_values
        .iter()
        .map(|&r| {
            let mean = totals.iter().map(|z| (-r * z).exp()).sum::<f64>() / n_samples as f64;
            if !(mean > 0.0) {
                return Err(Error::UnusableLaplace { r });
            }
            let empirical = -mean.ln();
            let quadrature = laplace_exponent(&local, model, t, r)?;
            let rel_error = if quadrature == 0.0 { empirical.abs() } else { (empirical - quadrature).abs() / quadrature.abs() };
            Ok(LaplaceComparison { r, empirical, quadrature, rel_error })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::TruncatedStable;
    use crate::stats::{ks_test, mean_stderr};
    use crate::rng::SeedTree;
    use approx::assert_relative_eq;

    fn params() -> CutParams {
        CutParams::new(0.1, 1e-3, 1.0).unwrap()
    }

    fn stable(a: f64) -> TruncatedStable {
        TruncatedStable::new(a).unwrap()
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(CutParams::new(0.0, 1e-3, 1.0).is_err());
        assert!(CutParams::new(1.0, 1e-3, 1.0).is_err());
        assert!(CutParams::new(0.1, 0.0, 1.0).is_err());
        assert!(CutParams::new(0.1, 1e-3, 0.0).is_err());
    }

    #[test]
    fn intensity_examples() {
        let p = params();
        // oracle: quadrature of (1/(h s))^eps over (0, 1]
        let oracle = integrate(|s: f64| (1.0 / (1e-3 * s)).powf(0.1), 0.0, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap().value;
        assert_relative_eq!(oracle, 2.216_96, max_relative = 1e-5);
        assert_relative_eq!(p.intensity(1.0), oracle, max_relative = 1e-10);
        assert_eq!(p.intensity(0.0), 0.0);
        for n in [16.0, 512.0, 4096.0] {
            let q = CutParams::new(0.1, CutParams::n_power_h(n, 0.1), 1.0).unwrap();
            assert_relative_eq!(q.intensity(1.0), n / 0.9, max_relative = 1e-12);
        }
    }

    #[test]
    fn inverse_intensity_round_trip() {
        let p = params();
        assert_relative_eq!(p.inverse_intensity(p.intensity(0.37)), 0.37, max_relative = 1e-12);
        assert_eq!(inverse_lambda(&p, 0.0).unwrap(), 0.0);
        assert_relative_eq!(p.inverse_intensity(2.216_96), 1.0, max_relative = 2e-5);
        let q = CutParams::new(0.35, 1e-20, 3.0).unwrap();
        for t in [1e-6, 0.2, 2.9] {
            assert_relative_eq!(q.inverse_intensity(q.intensity(t)), t, max_relative = 1e-12);
        }
    }

    #[test]
    fn huge_gap_gives_no_jumps() {
        assert!(jump_times_from_gaps(&params(), [1e300, 0.1]).is_empty());
        let times = jump_times_from_gaps(&params(), [0.5, 0.5, 0.5, 10.0, 0.1]);
        assert_eq!(times.len(), 3);
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn null_side_has_no_jumps() {
        let m = TruncatedStable::one_sided(1.0).unwrap();
        let mut rng = SeedTree::new(1).rng();
        assert!(sample_jump_times(&params(), &m, Side::Neg, &mut rng).is_empty());
        assert_eq!(intensity_lambda(&params(), &m, Side::Neg, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn mean_count_matches_intensity() {
        let p = params();
        let m = stable(1.0);
        let mut rng = SeedTree::new(11).rng();
        let counts: Vec<f64> = (0..1000).map(|_| sample_jump_times(&p, &m, Side::Pos, &mut rng).len() as f64).collect();
        let (mean, se) = mean_stderr(&counts);
        assert!((mean - p.intensity(1.0)).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn cdf_is_eps_at_branch_boundary() {
        let p = params();
        let m = stable(1.0);
        let t = 0.4;
        // N(x) = (th)^{-eps}  <=>  x = tau((th)^eps)
        let x = m.tau(Side::Pos, p.cut_level(t)).unwrap();
        assert_relative_eq!(jump_size_cdf(&p, &m, Side::Pos, t, x).unwrap(), 0.1, max_relative = 1e-12);
        for side in Side::BOTH {
            for u in [0.1, 0.1 * (1.0 - 1e-15)] {
                let q = inverse_jump_size_cdf(&p, &m, side, t, u).unwrap();
                assert_relative_eq!(q, x, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn cdf_examples() {
        let p = params();
        let m = stable(1.0);
        assert_eq!(jump_size_cdf(&p, &m, Side::Pos, 1.0, 1.5).unwrap(), 1.0);
        // th = 1e-3, x = 0.9: second branch 1 - 0.9 * 10^{-0.3} N(0.9)
        let n = 1.0 / 0.9 - 1.0;
        let expected = 1.0 - 0.9 * 10f64.powf(-0.3) * n;
        assert_relative_eq!(jump_size_cdf(&p, &m, Side::Pos, 1.0, 0.9).unwrap(), expected, max_relative = 1e-13);
        // oracle: normalized mu(t, du) = (h^{-1} N(u)^{-1/eps} ^ t) nu(du)
        let mu = |u: f64| (1e3 * (1.0 / u - 1.0).powf(-10.0)).min(1.0) / (u * u);
        let total = integrate(mu, 0.0, 1.0, Tolerance::new(1e-12, 1e-11)).unwrap().value;
        let below = integrate(mu, 0.0, 0.9, Tolerance::new(1e-12, 1e-11)).unwrap().value;
        assert_relative_eq!(total, p.intensity(1.0), max_relative = 1e-8);
        assert_relative_eq!(below / total, expected, max_relative = 1e-8);
        assert!(jump_size_cdf(&p, &m, Side::Pos, 0.0, 0.5).is_err());
    }

    #[test]
    fn quantile_round_trip() {
        let p = params();
        for a in [0.5, 1.0, 1.5] {
            let m = stable(a);
            for t in [1e-4, 0.3, 1.0] {
                for i in 1..100 {
                    let u = i as f64 / 100.0;
                    let x = inverse_jump_size_cdf(&p, &m, Side::Neg, t, u).unwrap();
                    let back = jump_size_cdf(&p, &m, Side::Neg, t, x).unwrap();
                    assert!((back - u).abs() <= 1e-10, "a={a} t={t} u={u} back={back}");
                    // the law puts mass eps below the current cut level
                    let cut = threshold(&p, &m, Side::Neg, t).unwrap();
                    if u >= 0.1 {
                        assert!(x >= cut * (1.0 - 1e-12));
                    } else {
                        assert!(x <= cut * (1.0 + 1e-12));
                    }
                }
            }
        }
        let m = stable(1.0);
        assert!(inverse_jump_size_cdf(&p, &m, Side::Pos, 0.5, 1.0 - 1e-13).unwrap() > 0.999);
        assert!(inverse_jump_size_cdf(&p, &m, Side::Pos, 0.5, 0.0).is_err());
        assert!(inverse_jump_size_cdf(&p, &m, Side::Pos, 0.5, 1.0).is_err());
    }

    #[test]
    fn cdf_depends_on_product_th() {
        let m = stable(0.7);
        let a = CutParams::new(0.2, 1e-4, 1.0).unwrap();
        let b = CutParams::new(0.2, 2e-4, 1.0).unwrap();
        for x in [0.01, 0.2, 0.8] {
            let fa = jump_size_cdf(&a, &m, Side::Pos, 0.5, x).unwrap();
            let fb = jump_size_cdf(&b, &m, Side::Pos, 0.25, x).unwrap();
            assert_relative_eq!(fa, fb, max_relative = 1e-12);
        }
    }

    #[test]
    fn sizes_respect_threshold_and_law() {
        let p = params();
        let m = stable(1.0);
        let mut rng = SeedTree::new(5).rng();
        let t = 0.5;
        let times = vec![t; 10_000];
        let sizes = sample_jump_sizes(&p, &m, Side::Neg, &times, &mut rng).unwrap();
        let cut = threshold(&p, &m, Side::Neg, t).unwrap();
        assert!(sizes.iter().all(|&z| z < 0.0));
        let below: Vec<f64> = sizes.iter().map(|&z| if -z < cut { 1.0 } else { 0.0 }).collect();
        let (frac, se) = mean_stderr(&below);
        assert!((frac - 0.1).abs() < 3.0 * se, "fraction below cut {frac}");
        let mags: Vec<f64> = sizes.iter().map(|z| -z).collect();
        let ks = ks_test(&mags, |x| jump_size_cdf(&p, &m, Side::Neg, t, x).unwrap(), 0.01);
        assert!(ks.passes(), "{ks:?}");
        assert!(sample_jump_sizes(&p, &m, Side::Pos, &[], &mut rng).unwrap().is_empty());
    }

    #[test]
    fn drift_vanishes_for_symmetric_measure() {
        let p = params();
        assert_eq!(compensated_drift(&p, &stable(1.5), 0.7).unwrap(), 0.0);
        assert_eq!(compensated_drift(&p, &TruncatedStable::one_sided(1.5).unwrap(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn one_sided_drift_matches_nested_quadrature() {
        let p = CutParams::new(0.1, 1e-3, 1.0).unwrap();
        let a = 1.5;
        let m = TruncatedStable::one_sided(a).unwrap();
        let t = 0.05;
        // oracle: nested quadrature of u * u^{-1-a} over (tau((s h)^eps), 1]
        let tau = |w: f64| (w / (a + w)).powf(1.0 / a);
        let oracle = integrate(
            |s: f64| {
                let r = tau((s * 1e-3).powf(0.1));
                integrate(|u: f64| u.powf(-a), r, 1.0, Tolerance::new(1e-13, 1e-12)).unwrap().value
            },
            0.0,
            t,
            Tolerance::new(1e-12, 1e-10),
        )
        .unwrap()
        .value;
        let got = compensated_drift(&p, &m, t).unwrap();
        assert!(got > 0.0);
        assert_relative_eq!(got, oracle, max_relative = 1e-7);
    }

    #[test]
    fn variance_rate_examples() {
        let p = params();
        for a in [0.5, 1.0, 1.5] {
            let m = stable(a);
            for s in [1e-3, 0.5, 1.0] {
                let r = m.tau(Side::Pos, p.cut_level(s)).unwrap();
                let closed = 2.0 * r.powf(2.0 - a) / (2.0 - a);
                let q = 2.0 * integrate(|z: f64| z.powf(1.0 - a), 0.0, r, Tolerance::new(1e-13, 1e-12)).unwrap().value;
                let got = small_jump_variance_rate(&p, &m, s).unwrap();
                assert_relative_eq!(got, closed, max_relative = 1e-12);
                assert_relative_eq!(got, q, max_relative = 1e-8);
            }
            // h so large the threshold sits at the edge: total second moment
            let wide = CutParams::new(0.5, 1e30, 1.0).unwrap();
            assert_relative_eq!(small_jump_variance_rate(&wide, &m, 1.0).unwrap(), 2.0 / (2.0 - a), max_relative = 1e-12);
            let rates: Vec<f64> = (1..50).map(|i| small_jump_variance_rate(&p, &m, i as f64 / 50.0).unwrap()).collect();
            assert!(rates.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn laplace_identity_holds() {
        let p = params();
        let m = stable(1.0);
        let mut rng = SeedTree::new(99).rng();
        let out = empirical_laplace_check(&p, &m, 1.0, &[0.0, 1.0], 100_000, &mut rng).unwrap();
        assert_eq!(out[0].empirical, 0.0);
        assert_eq!(out[0].quadrature, 0.0);
        assert!(out[1].rel_error < 0.05, "{:?}", out[1]);
    }

    #[test]
    fn conditional_law_respects_the_cut() {
        let m = stable(1.0);
        let p = CutParams::new(0.1, 1e-12, 1.0).unwrap().with_size_law(SizeLaw::Conditional);
        assert_eq!(p.with_horizon(2.0).unwrap().size_law(), SizeLaw::Conditional);
        for t in [0.01, 0.5, 1.0] {
            let cut = threshold(&p, &m, Side::Pos, t).unwrap();
            assert_eq!(size_cdf(&p, &m, Side::Pos, t, 0.999 * cut).unwrap(), 0.0);
            assert!(size_cdf(&p, &m, Side::Pos, t, cut).unwrap().abs() < 1e-12);
            for u in [1e-6, 0.1, 0.5, 0.99] {
                let x = size_quantile(&p, &m, Side::Pos, t, u).unwrap();
                assert!(x >= cut);
                assert!((size_cdf(&p, &m, Side::Pos, t, x).unwrap() - u).abs() < 1e-10);
            }
        }
        // oracle: nu restricted beyond the cut, normalized, by quadrature
        let t = 0.3;
        let cut = threshold(&p, &m, Side::Pos, t).unwrap();
        let x = 0.2;
        let num = integrate(|z: f64| z.powi(-2), x, 1.0, Tolerance::new(1e-13, 1e-12)).unwrap().value;
        let den = integrate(|z: f64| z.powi(-2), cut, 1.0, Tolerance::new(1e-13, 1e-12)).unwrap().value;
        assert_relative_eq!(conditional_size_cdf(&p, &m, Side::Pos, t, x).unwrap(), 1.0 - num / den, max_relative = 1e-9);
    }

    #[test]
    fn laplace_identity_at_small_h_needs_the_conditional_law() {
        // about 100 jumps per path; the pooled law undershoots the sum
        let m = stable(1.0);
        let pooled = CutParams::new(0.1, 2.876_908e-20, 1.0).unwrap();
        let exact = pooled.with_size_law(SizeLaw::Conditional);
        let run = |p: &CutParams| empirical_laplace_check(p, &m, 1.0, &[0.5, 1.0, 2.0], 20_000, &mut SeedTree::new(5).rng()).unwrap();
        for c in run(&exact) {
            assert!(c.rel_error < 0.02, "{c:?}");
        }
        for c in run(&pooled) {
            assert!(c.empirical < c.quadrature && c.rel_error > 0.05, "{c:?}");
        }
    }
}
