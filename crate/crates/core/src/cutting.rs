//! Types shared by the two ways of splitting a Levy measure into simulated
//! large jumps and removed small jumps.

use std::fmt;

use rand::RngCore;

use crate::error::Result;
use crate::levy::{LevyMeasure, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Time-dependent threshold `tau((s h)^eps)`.
    Dc,
    /// Fixed threshold (Asmussen-Rosinski).
    Ar,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dc => "dc",
            Method::Ar => "ar",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dc" => Ok(Method::Dc),
            "ar" => Ok(Method::Ar),
            other => Err(format!("unknown method {other:?} (expected \"dc\" or \"ar\")")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// Signed jump size.
    pub size: f64,
    pub side: Side,
}

/// Large jumps of one trajectory on `(0, T]`, sorted by time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct JumpStream {
    events: Vec<JumpEvent>,
}

impl JumpStream {
    /// Merges per-side times and signed sizes; equal times keep the
    /// positive side first.
    pub fn from_sides(pos: (&[f64], &[f64]), neg: (&[f64], &[f64])) -> Self {
        assert_eq!(pos.0.len(), pos.1.len(), "one size per positive jump time");
        assert_eq!(neg.0.len(), neg.1.len(), "one size per negative jump time");
        let mut events: Vec<JumpEvent> = pos
            .0
            .iter()
            .zip(pos.1)
            .map(|(&time, &size)| JumpEvent { time, size, side: Side::Pos })
            .chain(neg.0.iter().zip(neg.1).map(|(&time, &size)| JumpEvent { time, size, side: Side::Neg }))
            .collect();
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.side.cmp(&b.side)));
        Self { events }
    }

    pub fn from_events(mut events: Vec<JumpEvent>) -> Self {
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.side.cmp(&b.side)));
        Self { events }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count(&self, side: Side) -> usize {
        self.events.iter().filter(|e| e.side == side).count()
    }

    /// Events with `time <= t`.
    pub fn truncated(&self, t: f64) -> Self {
        Self { events: self.events.iter().copied().filter(|e| e.time <= t).collect() }
    }
}

/// A rule deciding which jumps are simulated exactly.
///
/// At time `s`, jumps on `side` with magnitude at least `threshold(side, s)`
/// are kept; smaller ones are omitted or replaced by a Gaussian.
pub trait Cutting: Send + Sync + fmt::Debug {
    fn method(&self) -> Method;

    fn horizon(&self) -> f64;

    fn threshold(&self, model: &dyn LevyMeasure, side: Side, s: f64) -> Result<f64>;

    /// Samples the large jumps on `(0, T]`. Random numbers are consumed in a
    /// fixed order: arrival exponentials for the positive then the negative
    /// side, then size uniforms in the same side order.
    fn sample_jumps(&self, model: &dyn LevyMeasure, rng: &mut dyn RngCore) -> Result<JumpStream>;

    /// `int_{t0}^{t1} sum_± ± int_{|z| >= threshold} |z| nu^±(dz) ds`.
    fn large_jump_drift(&self, model: &dyn LevyMeasure, t0: f64, t1: f64) -> Result<f64>;

    /// Instantaneous variance of removed jumps,
    /// `sum_± int_{0 < z < threshold(s)} z^2 nu^±(dz)`.
    fn small_jump_variance_rate(&self, model: &dyn LevyMeasure, s: f64) -> Result<f64> {
        let mut total = 0.0;
        for side in Side::BOTH {
            let r = self.threshold(model, side, s)?;
            total += model.moment_between(side, 2.0, 0.0, r);
        }
        Ok(total)
    }
}
