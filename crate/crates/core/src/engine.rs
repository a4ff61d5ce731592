//! Euler schemes on the merged grid of regular and jump times, driven by
//! noise that is shared across resolutions of one trajectory.
//!
//! The finest level splits every benchmark interval at the jump times that
//! fall inside it; the Brownian value at a split point is drawn from the
//! bridge between the interval's endpoints. Any coarse increment is then the
//! in-order sum of the finest increments it covers.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::cutting::{Cutting, JumpEvent, JumpStream, Method};
use crate::error::{domain, Error, Result};
use crate::levy::LevyMeasure;
use crate::rng::{stream, SeedTree};
use crate::sde::{large_jump_compensator, sigma_small_sq, Coefficients, SigmaMode};

/// States beyond this magnitude abort the trajectory.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub time: f64,
    /// Lies on the regular grid.
    pub regular: bool,
    /// Indices into the jump stream of the jumps at this time.
    pub jumps: Range<usize>,
}

impl GridPoint {
    pub fn has_jump(&self) -> bool {
        !self.jumps.is_empty()
    }
}

/// Sorted union of regular and jump times; a jump landing on a regular time
/// is carried by that point.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedGrid {
    points: Vec<GridPoint>,
    regular_intervals: usize,
}

impl MergedGrid {
    /// Merges `regular` (sorted, starting at 0) with the jump times in
    /// `jumps`. Jumps outside `(0, regular.last()]` are ignored.
    pub fn from_regular(regular: &[f64], jumps: &JumpStream) -> Self {
        let events = jumps.events();
        let end = *regular.last().expect("regular grid is nonempty");
        let mut points = Vec::with_capacity(regular.len() + events.len());
        let mut j = events.partition_point(|e| e.time <= 0.0);
        let j_end = events.partition_point(|e| e.time <= end);
        let group = |j: usize| {
            let t = events[j].time;
            let mut k = j;
            while k < j_end && events[k].time == t {
                k += 1;
            }
            j..k
        };
        for &t in regular {
            while j < j_end && events[j].time < t {
                let g = group(j);
                j = g.end;
                points.push(GridPoint { time: events[g.start].time, regular: false, jumps: g });
            }
            if j < j_end && events[j].time == t {
                let g = group(j);
                j = g.end;
                points.push(GridPoint { time: t, regular: true, jumps: g });
            } else {
                points.push(GridPoint { time: t, regular: true, jumps: j..j });
            }
        }
        Self { points, regular_intervals: regular.len() - 1 }
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.time).collect()
    }

    pub fn regular_intervals(&self) -> usize {
        self.regular_intervals
    }

    /// Number of grid points strictly before `t`.
    pub fn rho(&self, t: f64) -> usize {
        self.points.partition_point(|p| p.time < t)
    }

    pub fn jump_points(&self) -> usize {
        self.points.iter().filter(|p| p.has_jump()).count()
    }
}

/// `T i / n` for `i = 0..=n`.
pub fn regular_times(n: usize, horizon: f64) -> Vec<f64> {
    (0..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

pub fn build_merged_grid(n: usize, jumps: &JumpStream, horizon: f64) -> Result<MergedGrid> {
    if n == 0 {
        return Err(domain("grid needs at least one interval"));
    }
    if !(horizon > 0.0) {
        return Err(domain(format!("horizon must be positive, got {horizon}")));
    }
    Ok(MergedGrid::from_regular(&regular_times(n, horizon), jumps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmallJumpCoupling {
    /// Fresh standard normals per resolution and interval.
    #[default]
    Independent,
    /// Gaussian substitutes are increments of a second Brownian motion,
    /// aggregated across resolutions like the main one.
    Brownian,
}

impl FromStr for SmallJumpCoupling {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "brownian" => Ok(Self::Brownian),
            "independent" => Ok(Self::Independent),
            other => Err(format!("unknown small-jump coupling {other:?} (expected \"brownian\" or \"independent\")")),
        }
    }
}

impl fmt::Display for SmallJumpCoupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Brownian => "brownian",
            Self::Independent => "independent",
        })
    }
}

/// All randomness of one trajectory for one cutting method.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingNoise {
    horizon: f64,
    benchmark_k: u32,
    fine_times: Vec<f64>,
    jumps: JumpStream,
    finest: MergedGrid,
    /// Increments of `B` and `W` over the finest segments.
    db: Vec<f64>,
    dw: Vec<f64>,
    method: Method,
    node: SeedTree,
}

fn method_tag(method: Method) -> u64 {
    match method {
        Method::Dc => 1,
        Method::Ar => 2,
    }
}

/// Splits the increment `total` over `[a, b]` at the interior `cuts`.
fn bridge_split<R: Rng + ?Sized>(a: f64, b: f64, total: f64, cuts: &[f64], rng: &mut R, out: &mut Vec<f64>) {
    let mut left = a;
    let mut remaining = total;
    for &s in cuts {
        let span = b - left;
        let step = s - left;
        let mean = remaining * step / span;
        let var = (step * (b - s) / span).max(0.0);
        let z: f64 = rng.sample(StandardNormal);
        let inc = mean + var.sqrt() * z;
        out.push(inc);
        remaining -= inc;
        left = s;
    }
    out.push(remaining);
}

impl DrivingNoise {
    pub fn from_parts(
        benchmark_k: u32,
        horizon: f64,
        jumps: JumpStream,
        fine_db: &[f64],
        fine_dw: &[f64],
        method: Method,
        node: SeedTree,
        bridge: &mut dyn rand::RngCore,
    ) -> Result<Self> {
        let n = 1usize << benchmark_k;
        if fine_db.len() != n || fine_dw.len() != n {
            return Err(Error::Coupling(format!("expected {n} fine increments, got {} and {}", fine_db.len(), fine_dw.len())));
        }
        let fine_times = regular_times(n, horizon);
        let finest = MergedGrid::from_regular(&fine_times, &jumps);
        let mut db = Vec::with_capacity(finest.len());
        let mut dw = Vec::with_capacity(finest.len());
        let pts = finest.points();
        let mut p = 0;
        let mut cuts = Vec::new();
        for i in 0..n {
            let (a, b) = (fine_times[i], fine_times[i + 1]);
            debug_assert!(pts[p].time == a && pts[p].regular);
            cuts.clear();
            p += 1;
            while !pts[p].regular {
                cuts.push(pts[p].time);
                p += 1;
            }
            bridge_split(a, b, fine_db[i], &cuts, bridge, &mut db);
            bridge_split(a, b, fine_dw[i], &cuts, bridge, &mut dw);
        }
        Ok(Self { horizon, benchmark_k, fine_times, jumps, finest, db, dw, method, node })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn benchmark_k(&self) -> u32 {
        self.benchmark_k
    }

    pub fn benchmark_n(&self) -> usize {
        1usize << self.benchmark_k
    }

    pub fn fine_times(&self) -> &[f64] {
        &self.fine_times
    }

    pub fn jumps(&self) -> &JumpStream {
        &self.jumps
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn node(&self) -> SeedTree {
        self.node
    }

    pub fn finest_grid(&self) -> &MergedGrid {
        &self.finest
    }

    pub fn finest_db(&self) -> &[f64] {
        &self.db
    }

    pub fn finest_dw(&self) -> &[f64] {
        &self.dw
    }

    fn stride(&self, n: usize) -> Result<usize> {
        let fine = self.benchmark_n();
        if n == 0 || n > fine || fine % n != 0 {
            return Err(Error::Coupling(format!("resolution {n} does not divide the benchmark resolution {fine}")));
        }
        Ok(fine / n)
    }

    /// Merged grid at resolution `n` together with the index of each of its
    /// points in the finest grid.
    pub fn grid(&self, n: usize) -> Result<(MergedGrid, Vec<usize>)> {
        let stride = self.stride(n)?;
        let regular: Vec<f64> = self.fine_times.iter().step_by(stride).copied().collect();
        let grid = MergedGrid::from_regular(&regular, &self.jumps);
        let fine = self.finest.points();
        let mut index = Vec::with_capacity(grid.len());
        let mut q = 0;
        for p in grid.points() {
            while fine[q].time != p.time {
                q += 1;
            }
            index.push(q);
        }
        Ok((grid, index))
    }

    /// Increments of `B` and `W` between consecutive points of the grid at
    /// resolution `n`, summed in order from the finest level.
    pub fn increments(&self, n: usize) -> Result<(MergedGrid, Vec<f64>, Vec<f64>)> {
        let (grid, index) = self.grid(n)?;
        let sum = |v: &[f64], a: usize, b: usize| v[a..b].iter().fold(0.0, |s, x| s + x);
        let db = index.windows(2).map(|w| sum(&self.db, w[0], w[1])).collect();
        let dw = index.windows(2).map(|w| sum(&self.dw, w[0], w[1])).collect();
        Ok((grid, db, dw))
    }
}

/// Draws the noise of one trajectory. Brownian increments come from streams
/// shared by both cutting methods; jumps and bridge points are per method.
pub fn prepare_noise(node: SeedTree, benchmark_k: u32, cutting: &dyn Cutting, model: &dyn LevyMeasure) -> Result<DrivingNoise> {
    if benchmark_k > 30 {
        return Err(domain(format!("benchmark exponent {benchmark_k} is too large")));
    }
    let n = 1usize << benchmark_k;
    let horizon = cutting.horizon();
    let sd = (horizon / n as f64).sqrt();
    let fine = |tag: u64| -> Vec<f64> {
        let mut rng = node.child(tag).rng();
        (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    let db = fine(stream::BROWNIAN);
    let dw = fine(stream::SMALL_JUMP_NOISE);
    let tag = method_tag(cutting.method());
    let jumps = cutting.sample_jumps(model, &mut node.path(&[stream::JUMPS, tag]).rng())?;
    let mut bridge = node.path(&[stream::BRIDGE, tag]).rng();
    DrivingNoise::from_parts(benchmark_k, horizon, jumps, &db, &dw, cutting.method(), node, &mut bridge)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Small jumps omitted.
    OmitSmall,
    /// Small jumps replaced by a Gaussian.
    GaussianSmall,
}

impl Scheme {
    pub fn number(self) -> u8 {
        match self {
            Scheme::OmitSmall => 1,
            Scheme::GaussianSmall => 2,
        }
    }

    pub fn from_number(k: u8) -> Option<Self> {
        match k {
            1 => Some(Scheme::OmitSmall),
            2 => Some(Scheme::GaussianSmall),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim()
            .parse::<u8>()
            .ok()
            .and_then(Scheme::from_number)
            .ok_or_else(|| format!("unknown scheme {s:?} (expected 1 or 2)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub scheme: Scheme,
    pub x0: f64,
    pub sigma_mode: SigmaMode,
    pub compensate: bool,
    pub coupling: SmallJumpCoupling,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::GaussianSmall,
            x0: 0.0,
            sigma_mode: SigmaMode::ClosedForm,
            compensate: true,
            coupling: SmallJumpCoupling::Independent,
        }
    }
}

/// Values at the merged-grid points; between points the path is the value
/// at the right endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub scheme: Scheme,
    pub method: Method,
    pub n: usize,
    pub trajectory: u64,
}

impl PathRecord {
    /// `X_t` under the piecewise-constant extension.
    pub fn value_at(&self, t: f64) -> f64 {
        let i = self.times.partition_point(|&s| s < t).min(self.times.len() - 1);
        self.values[i]
    }
}

fn jump_increment(coeffs: &dyn Coefficients, events: &[JumpEvent], t: f64, x: f64) -> f64 {
    events.iter().map(|e| coeffs.jump(t, x, e.size)).sum()
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    coeffs: &dyn Coefficients,
    model: &dyn LevyMeasure,
    cutting: &dyn Cutting,
    noise: &DrivingNoise,
    n: usize,
    opts: &SimOptions,
) -> Result<PathRecord> {
    if cutting.method() != noise.method {
        return Err(Error::Coupling(format!("noise drawn for {} used with {}", noise.method, cutting.method())));
    }
    let (grid, db, dw) = noise.increments(n)?;
    let events = noise.jumps.events();
    let points = grid.points();
    let mut independent = match (opts.scheme, opts.coupling) {
        (Scheme::GaussianSmall, SmallJumpCoupling::Independent) => {
            Some(noise.node.path(&[stream::INDEPENDENT_SMALL, method_tag(noise.method), n as u64]).rng())
        }
        _ => None,
    };
    let mut values = Vec::with_capacity(points.len());
    let mut x = opts.x0;
    values.push(x);
    for i in 1..points.len() {
        let t0 = points[i - 1].time;
        let t1 = points[i].time;
        let dt = t1 - t0;
        let mut next = x + coeffs.drift(t0, x) * dt;
        let b = coeffs.diffusion(t0, x);
        if b != 0.0 {
            next += b * db[i - 1];
        }
        next += jump_increment(coeffs, &events[points[i - 1].jumps.clone()], t0, x);
        if opts.scheme == Scheme::GaussianSmall && dt > 0.0 {
            let var = sigma_small_sq(coeffs, model, cutting, x, t0, t1, opts.sigma_mode)?;
            let zeta = match independent.as_mut() {
                Some(rng) => rng.sample::<f64, _>(StandardNormal),
                None => dw[i - 1] / dt.sqrt(),
            };
            next += var.sqrt() * zeta;
        }
        if opts.compensate {
            next -= large_jump_compensator(coeffs, model, cutting, x, t0, t1)?;
        }
        if !next.is_finite() || next.abs() > DIVERGENCE_BOUND {
            return Err(Error::Divergence { step: i, time: t1, value: next });
        }
        x = next;
        values.push(x);
    }
    Ok(PathRecord { times: grid.times(), values, scheme: opts.scheme, method: noise.method, n, trajectory: noise.node.key() })
}
