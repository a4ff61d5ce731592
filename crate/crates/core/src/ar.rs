//! Fixed-threshold baseline (Asmussen-Rosinski): jumps larger than a
//! constant `eps` form a homogeneous compound Poisson process; the rest are
//! omitted or replaced by a Gaussian of matching variance.

use rand::{Rng, RngCore};
use rand_distr::{Exp1, Open01};

use crate::cutting::{Cutting, JumpStream, Method};
use crate::error::{domain, Error, Result};
use crate::levy::{LevyMeasure, Side};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArParams {
    threshold: f64,
    horizon: f64,
}

impl ArParams {
    pub fn new(threshold: f64, horizon: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(domain(format!("fixed threshold must be positive, got {threshold}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { threshold, horizon })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Jumps per unit time on `side`: `N^±(eps)`.
pub fn ar_intensity(params: &ArParams, model: &dyn LevyMeasure, side: Side) -> Result<f64> {
    let rate = model.tail(side, params.threshold);
    if rate.is_finite() {
        Ok(rate)
    } else {
        Err(domain(format!("tail mass beyond {} is infinite", params.threshold)))
    }
}

/// Distribution function of the magnitude of a retained jump,
/// `1 - N(x) / N(eps)` for `x >= eps`.
pub fn ar_size_cdf(params: &ArParams, model: &dyn LevyMeasure, side: Side, x: f64) -> f64 {
    if x < params.threshold {
        return 0.0;
    }
    let total = model.tail(side, params.threshold);
    if total == 0.0 {
        return 1.0;
    }
    1.0 - model.tail(side, x) / total
}

/// Quantile of the retained magnitude law: solves `N(x) = (1 - u) N(eps)`
/// through the model's `tau`.
pub fn ar_size_quantile(params: &ArParams, model: &dyn LevyMeasure, side: Side, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(domain(format!("quantile level must lie in (0, 1), got {u}")));
    }
    let total = ar_intensity(params, model, side)?;
    let x = model.tau(side, 1.0 / ((1.0 - u) * total))?;
    Ok(x.max(params.threshold))
}

fn homogeneous_times<R: RngCore + ?Sized>(rate: f64, horizon: f64, rng: &mut R) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut t = 0.0;
    loop {
        t += rng.sample::<f64, _>(Exp1) / rate;
        if !(t < horizon) {
            break;
        }
        times.push(t);
    }
    times
}

pub fn ar_sample_jumps<R: RngCore + ?Sized>(params: &ArParams, model: &dyn LevyMeasure, rng: &mut R) -> Result<JumpStream> {
    let rates = [ar_intensity(params, model, Side::Pos)?, ar_intensity(params, model, Side::Neg)?];
    let pos_t = homogeneous_times(rates[0], params.horizon, rng);
    let neg_t = homogeneous_times(rates[1], params.horizon, rng);
    let mut sizes = |side: Side, n: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                Ok(side.sign() * ar_size_quantile(params, model, side, u)?)
            })
            .collect()
    };
    let pos_z = sizes(Side::Pos, pos_t.len())?;
    let neg_z = sizes(Side::Neg, neg_t.len())?;
    Ok(JumpStream::from_sides((&pos_t, &pos_z), (&neg_t, &neg_z)))
}

/// `int_{|z| <= eps} z^2 nu(dz)` per unit time.
pub fn ar_small_jump_variance(params: &ArParams, model: &dyn LevyMeasure) -> Result<f64> {
    let v: f64 = Side::BOTH.iter().map(|&s| model.moment_between(s, 2.0, 0.0, params.threshold)).sum();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Integrability("second moment near the origin".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCut {
    pub params: ArParams,
}

impl FixedCut {
    pub fn new(params: ArParams) -> Self {
        Self { params }
    }
}

impl Cutting for FixedCut {
    fn method(&self) -> Method {
        Method::Ar
    }

    fn horizon(&self) -> f64 {
        self.params.horizon
    }

    fn threshold(&self, _model: &dyn LevyMeasure, _side: Side, _s: f64) -> Result<f64> {
        Ok(self.params.threshold)
    }

    fn sample_jumps(&self, model: &dyn LevyMeasure, rng: &mut dyn RngCore) -> Result<JumpStream> {
        ar_sample_jumps(&self.params, model, rng)
    }

    fn large_jump_drift(&self, model: &dyn LevyMeasure, t0: f64, t1: f64) -> Result<f64> {
        if model.is_symmetric() || t1 <= t0 {
            return Ok(0.0);
        }
        let rate: f64 = Side::BOTH
            .iter()
            .map(|&s| s.sign() * model.moment_between(s, 1.0, self.params.threshold, f64::INFINITY))
            .sum();
        if rate.is_finite() {
            Ok(rate * (t1 - t0))
        } else {
            Err(Error::Integrability("first moment of the large jumps".into()))
        }
    }

    fn small_jump_variance_rate(&self, model: &dyn LevyMeasure, _s: f64) -> Result<f64> {
        ar_small_jump_variance(&self.params, model)
    }
}
