//! Monte Carlo estimation of strong `L^p` errors against a coupled benchmark
//! path, AR-versus-DC comparison tables and convergence-order fits.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::ar::{ArParams, FixedCut};
use crate::cutting::{Cutting, Method};
use crate::dc::{CutParams, DynamicCut, SizeLaw};
use crate::engine::{prepare_noise, simulate_path, PathRecord, Scheme, SimOptions};
use crate::error::{domain, Error, Result};
use crate::levy::{LevyMeasure, TruncatedStable};
use crate::quad::{integrate, trapezoid, Tolerance};
use crate::rng::{stream, SeedTree};
use crate::sde::Coefficients;
use crate::stats::{linear_fit, mean_stderr, quantile_sorted};

/// A cell with a larger share of excluded trajectories is flagged invalid.
pub const MAX_EXCLUDED_SHARE: f64 = 0.01;

/// `sup_t |X^bench_t - X^coarse_t|` over the union of both grids, with both
/// paths extended piecewise constantly.
pub fn strong_error(benchmark: &PathRecord, coarse: &PathRecord) -> Result<f64> {
    if benchmark.trajectory != coarse.trajectory || benchmark.method != coarse.method {
        return Err(Error::Coupling(format!(
            "paths come from different noise ({} {:#x} vs {} {:#x})",
            benchmark.method, benchmark.trajectory, coarse.method, coarse.trajectory
        )));
    }
    let (a, b) = (&benchmark.times, &coarse.times);
    let (mut i, mut j) = (0, 0);
    let mut sup = 0.0f64;
    // each union point takes the value of the first grid point at or after it
    while i < a.len() && j < b.len() {
        let d = (benchmark.values[i] - coarse.values[j]).abs();
        sup = sup.max(d);
        let (ta, tb) = (a[i], b[j]);
        if ta == tb {
            i += 1;
            j += 1;
        } else if ta < tb {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(sup)
}

/// `(mean s^p)^{1/p}` with a delta-method standard error.
pub fn estimate_lp(samples: &[f64], p: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(domain("L^p estimate needs at least one sample"));
    }
    if !(p >= 1.0) {
        return Err(domain(format!("L^p exponent must be at least 1, got {p}")));
    }
    let powers: Vec<f64> = samples.iter().map(|s| s.abs().powf(p)).collect();
    let (m, se_m) = mean_stderr(&powers);
    let est = m.powf(1.0 / p);
    let se = if samples.len() < 2 {
        0.0
    } else if m > 0.0 {
        est / (p * m) * se_m
    } else {
        0.0
    };
    Ok((est, se))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HMode {
    /// `h = n^{-1/eps}` with `n` the benchmark resolution.
    NPower,
    /// Equal total small-jump variance of DC and AR on `[0, T]`.
    MatchArVariance,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeIntegration {
    /// Composite trapezoid rule with this many intervals.
    Trapezoid(usize),
    Adaptive,
}

impl Default for TimeIntegration {
    fn default() -> Self {
        TimeIntegration::Trapezoid(1024)
    }
}

impl FromStr for TimeIntegration {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if s == "adaptive" {
            return Ok(Self::Adaptive);
        }
        let tail = s.strip_prefix("trapezoid").ok_or_else(|| format!("unknown integration rule {s:?}"))?;
        if tail.is_empty() {
            return Ok(Self::default());
        }
        tail.trim_start_matches([':', '-'])
            .parse::<usize>()
            .ok()
            .filter(|&k| k > 0)
            .map(Self::Trapezoid)
            .ok_or_else(|| format!("bad trapezoid interval count in {s:?}"))
    }
}

/// `int_0^T sum_± int_0^{r(s)} z^2 nu(dz) ds` for the dynamic cut with scale `h`.
pub fn dc_total_small_variance(model: &dyn LevyMeasure, eps: f64, h: f64, horizon: f64, rule: TimeIntegration) -> Result<f64> {
    let params = CutParams::new(eps, h, horizon)?;
    let cut = DynamicCut::new(params);
    let rate = |s: f64| -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        cut.small_jump_variance_rate(model, s).unwrap_or(f64::NAN)
    };
    let v = match rule {
        TimeIntegration::Trapezoid(k) => trapezoid(rate, 0.0, horizon, k),
        TimeIntegration::Adaptive => integrate(rate, 0.0, horizon, Tolerance::new(0.0, 1e-11))?.value,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Integrability("small-jump variance of the dynamic cut".into()))
    }
}

/// Scale `h` of the dynamic cut whose removed variance on `[0, T]` equals
/// that of the fixed cut at `eps_ar`. A state-dependent factor `g(x)^2` of
/// `c = g(x) z` multiplies both sides and cancels, so no coefficients enter.
pub fn h_for_variance_match(
    model: &dyn LevyMeasure,
    eps_dc: f64,
    eps_ar: f64,
    horizon: f64,
    rule: TimeIntegration,
) -> Result<f64> {
    if !(eps_dc > 0.0 && eps_dc < 1.0 && eps_ar > 0.0 && eps_ar < 1.0) {
        return Err(domain(format!("both epsilons must lie in (0, 1), got {eps_dc} and {eps_ar}")));
    }
    let ar = ArParams::new(eps_ar, horizon)?;
    let target = horizon * crate::ar::ar_small_jump_variance(&ar, model)?;
    if !(target > 0.0) {
        return Err(Error::DegenerateModel("the fixed cut removes no variance".into()));
    }
    let gap = |lg: f64| -> Result<f64> { Ok(dc_total_small_variance(model, eps_dc, 10f64.powf(lg), horizon, rule)?.ln() - target.ln()) };
    let (mut lo, mut hi) = (-40.0, 0.0);
    let mut expansions = 0;
    while gap(lo)? > 0.0 {
        lo -= 40.0;
        expansions += 1;
        if expansions > 7 {
            return Err(Error::NoBracket(format!("variance stays above {target} down to h = 1e{lo}")));
        }
    }
    while gap(hi)? < 0.0 {
        hi += 20.0;
        expansions += 1;
        if expansions > 14 {
            return Err(Error::NoBracket(format!("variance stays below {target} up to h = 1e{hi}")));
        }
    }
    // relative 1e-6 in h is 4.3e-7 in log10 h
    while hi - lo > 1e-8 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(10f64.powf(0.5 * (lo + hi)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub alphas: Vec<f64>,
    pub scheme: Scheme,
    /// Difference tables report `methods[1] - methods[0]`.
    pub methods: Vec<Method>,
    pub eps_dc: f64,
    pub eps_ar: f64,
    pub dc_size_law: SizeLaw,
    pub h_mode: HMode,
    pub h_integration: TimeIntegration,
    pub benchmark_k: u32,
    pub coarse_ks: Vec<u32>,
    pub ps: Vec<f64>,
    pub loops: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub horizon: f64,
    pub sim: SimOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.5, 1.0, 1.5],
            scheme: Scheme::GaussianSmall,
            methods: vec![Method::Dc, Method::Ar],
            eps_dc: 0.1,
            eps_ar: 0.01,
            dc_size_law: SizeLaw::Pooled,
            h_mode: HMode::MatchArVariance,
            h_integration: TimeIntegration::default(),
            benchmark_k: 14,
            coarse_ks: vec![9, 10, 11, 12],
            ps: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            loops: 20,
            trajectories: 100,
            seed: 1,
            horizon: 1.0,
            sim: SimOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.iter().any(|&a| !(a > 0.0 && a < 2.0)) {
            return Err(domain("alpha values must lie in (0, 2)"));
        }
        if self.methods.is_empty() {
            return Err(domain("at least one method is required"));
        }
        if self.coarse_ks.is_empty() {
            return Err(domain("at least one coarse resolution is required"));
        }
        if let Some(&k) = self.coarse_ks.iter().find(|&&k| k >= self.benchmark_k) {
            return Err(domain(format!("coarse exponent {k} must be below the benchmark exponent {}", self.benchmark_k)));
        }
        if self.ps.is_empty() || self.ps.iter().any(|&p| !(p > 1.0)) {
            return Err(domain("every p must exceed 1"));
        }
        if self.scheme == Scheme::OmitSmall {
            for &a in &self.alphas {
                if let Some(&p) = self.ps.iter().find(|&&p| p <= a) {
                    return Err(domain(format!("scheme 1 needs p > max(1, alpha); p = {p} with alpha = {a}")));
                }
            }
        }
        if self.loops == 0 || self.trajectories == 0 {
            return Err(domain("loops and trajectories must be positive"));
        }
        CutParams::new(self.eps_dc, 1.0, self.horizon)?;
        ArParams::new(self.eps_ar, self.horizon)?;
        Ok(())
    }

    pub fn h_for(&self, model: &dyn LevyMeasure) -> Result<f64> {
        match self.h_mode {
            HMode::NPower => Ok(CutParams::n_power_h((1u64 << self.benchmark_k) as f64, self.eps_dc)),
            HMode::MatchArVariance => h_for_variance_match(model, self.eps_dc, self.eps_ar, self.horizon, self.h_integration),
            HMode::Fixed(h) => Ok(h),
        }
    }

    /// The cut for `method`; `h` is only used by the dynamic cut.
    pub fn cutting(&self, method: Method, h: f64) -> Result<Box<dyn Cutting>> {
        Ok(match method {
            Method::Dc => Box::new(DynamicCut::new(CutParams::new(self.eps_dc, h, self.horizon)?.with_size_law(self.dc_size_law))),
            Method::Ar => Box::new(FixedCut::new(ArParams::new(self.eps_ar, self.horizon)?)),
        })
    }

    pub fn trajectory_node(&self, lp: usize, traj: usize) -> SeedTree {
        SeedTree::new(self.seed).path(&[lp as u64, traj as u64])
    }
}

/// One trajectory under one method: sups for every coarse exponent.
pub fn trajectory_sups(
    coeffs: &dyn Coefficients,
    model: &dyn LevyMeasure,
    cutting: &dyn Cutting,
    node: SeedTree,
    benchmark_k: u32,
    coarse_ks: &[u32],
    opts: &SimOptions,
) -> Result<Vec<f64>> {
    let noise = prepare_noise(node, benchmark_k, cutting, model)?;
    let bench = simulate_path(coeffs, model, cutting, &noise, 1usize << benchmark_k, opts)?;
    coarse_ks
        .iter()
        .map(|&k| {
            let coarse = simulate_path(coeffs, model, cutting, &noise, 1usize << k, opts)?;
            strong_error(&bench, &coarse)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub alpha: f64,
    pub method: Method,
    pub scheme: Scheme,
    pub k: u32,
    pub p: f64,
    pub error: f64,
    pub stderr: f64,
    pub loops: usize,
    pub excluded: usize,
    pub invalid: bool,
    pub loop_estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffRow {
    pub alpha: f64,
    pub k: u32,
    pub p: f64,
    pub difference: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub differences: Vec<DiffRow>,
    pub h_values: Vec<(f64, f64)>,
}

impl ErrorTable {
    pub fn row(&self, alpha: f64, method: Method, k: u32, p: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.alpha == alpha && r.method == method && r.k == k && r.p == p)
    }

    pub fn difference(&self, alpha: f64, k: u32, p: f64) -> Option<&DiffRow> {
        self.differences.iter().find(|r| r.alpha == alpha && r.k == k && r.p == p)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,method,scheme,k,p,error,stderr,loops,excluded\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{:e},{:e},{},{}", r.alpha, r.method, r.scheme, r.k, r.p, r.error, r.stderr, r.loops, r.excluded);
        }
        s
    }

    pub fn differences_csv(&self) -> String {
        let mut s = String::from("alpha,k,p,ar_minus_dc,stderr\n");
        for r in &self.differences {
            let _ = writeln!(s, "{},{},{},{:e},{:e}", r.alpha, r.k, r.p, r.difference, r.stderr);
        }
        s
    }
}

/// Per-trajectory outcome: `None` marks a diverged trajectory.
type SlotResults = Vec<Option<Vec<f64>>>;

/// Runs every (alpha, method) cell. Trajectories are spread over the rayon
/// pool; the table does not depend on the number of threads.
pub fn run_comparison(config: &ExperimentConfig, coeffs: &dyn Coefficients) -> Result<ErrorTable> {
    config.validate()?;
    let mut table = ErrorTable::default();
    let units: Vec<(usize, usize)> = (0..config.loops).flat_map(|l| (0..config.trajectories).map(move |t| (l, t))).collect();
    for &alpha in &config.alphas {
        let model = TruncatedStable::new(alpha)?;
        let h = if config.methods.contains(&Method::Dc) {
            let h = config.h_for(&model)?;
            table.h_values.push((alpha, h));
            h
        } else {
            f64::NAN
        };
        let mut per_slot: Vec<SlotResults> = Vec::new();
        for &method in &config.methods {
            let cutting = config.cutting(method, h)?;
            let opts = SimOptions { scheme: config.scheme, ..config.sim };
            let results: Vec<Result<Option<Vec<f64>>>> = units
                .par_iter()
                .map(|&(l, t)| {
                    let node = config.trajectory_node(l, t);
                    match trajectory_sups(coeffs, &model, cutting.as_ref(), node, config.benchmark_k, &config.coarse_ks, &opts) {
                        Ok(s) => Ok(Some(s)),
                        Err(Error::Divergence { step, time, value }) => {
                            log::warn!("alpha {alpha} {method} loop {l} trajectory {t} diverged at step {step} (t = {time}, x = {value})");
                            Ok(None)
                        }
                        Err(e) => Err(e),
                    }
                })
                .collect();
            let results = results.into_iter().collect::<Result<Vec<_>>>()?;
            per_slot.push(results);
        }
        for (slot, &method) in config.methods.iter().enumerate() {
            let results = &per_slot[slot];
            let excluded = results.iter().filter(|r| r.is_none()).count();
            for (ki, &k) in config.coarse_ks.iter().enumerate() {
                for &p in &config.ps {
                    let mut loop_estimates = Vec::with_capacity(config.loops);
                    let mut last_se = 0.0;
                    for l in 0..config.loops {
                        let sups: Vec<f64> = results[l * config.trajectories..(l + 1) * config.trajectories]
                            .iter()
                            .filter_map(|r| r.as_ref().map(|s| s[ki]))
                            .collect();
                        if sups.is_empty() {
                            continue;
                        }
                        let (est, se) = estimate_lp(&sups, p)?;
                        loop_estimates.push(est);
                        last_se = se;
                    }
                    let (error, stderr) = if loop_estimates.is_empty() { (f64::NAN, f64::NAN) } else { batch_means(&loop_estimates, last_se) };
                    table.rows.push(ErrorRow {
                        alpha,
                        method,
                        scheme: config.scheme,
                        k,
                        p,
                        error,
                        stderr,
                        loops: loop_estimates.len(),
                        excluded,
                        invalid: excluded as f64 > MAX_EXCLUDED_SHARE * units.len() as f64,
                        loop_estimates,
                    });
                }
            }
        }
        if config.methods.len() == 2 {
            let rows_of = |slot: usize| -> Vec<ErrorRow> {
                let start = table.rows.len() - (2 - slot) * config.coarse_ks.len() * config.ps.len();
                table.rows[start..start + config.coarse_ks.len() * config.ps.len()].to_vec()
            };
            let (first, second) = (rows_of(0), rows_of(1));
            for (a, b) in first.iter().zip(&second) {
                let diffs: Vec<f64> = b.loop_estimates.iter().zip(&a.loop_estimates).map(|(y, x)| y - x).collect();
                let (difference, stderr) = batch_means(&diffs, (a.stderr.powi(2) + b.stderr.powi(2)).sqrt());
                table.differences.push(DiffRow { alpha, k: a.k, p: a.p, difference, stderr });
            }
        }
    }
    Ok(table)
}

/// Mean of loop estimates and its standard error; a single loop falls back
/// to `single_se`.
fn batch_means(values: &[f64], single_se: f64) -> (f64, f64) {
    let (m, se) = mean_stderr(values);
    (m, if values.len() < 2 { single_se } else { se })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceFit {
    pub slope: f64,
    pub intercept: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub points: usize,
}

impl ConvergenceFit {
    pub fn ci_excludes_zero(&self) -> bool {
        self.ci_high < 0.0 || self.ci_low > 0.0
    }
}

/// Least-squares slope of `ln error` against `ln n`; the interval comes from
/// resampling loops with replacement (the same loops at every `n`).
///
/// `per_loop[i][l]` is the estimate of loop `l` at resolution `ns[i]`.
pub fn fit_convergence_order(ns: &[f64], per_loop: &[Vec<f64>], level: f64, resamples: usize, seed: u64) -> Result<ConvergenceFit> {
    if ns.len() != per_loop.len() {
        return Err(domain("one row of loop estimates per resolution"));
    }
    let mut keep = Vec::new();
    for (i, row) in per_loop.iter().enumerate() {
        let m = row.iter().sum::<f64>() / row.len() as f64;
        if row.is_empty() || !(m > 0.0) {
            log::warn!("resolution {} has a nonpositive error and is left out of the fit", ns[i]);
        } else {
            keep.push(i);
        }
    }
    if keep.len() < 3 {
        return Err(domain(format!("convergence fit needs at least 3 resolutions with positive error, got {}", keep.len())));
    }
    let loops = per_loop[keep[0]].len();
    if keep.iter().any(|&i| per_loop[i].len() != loops) {
        return Err(domain("every resolution needs the same number of loops"));
    }
    let xs: Vec<f64> = keep.iter().map(|&i| ns[i].ln()).collect();
    let fit_with = |weights: &[usize]| -> f64 {
        let ys: Vec<f64> = keep
            .iter()
            .map(|&i| (weights.iter().map(|&l| per_loop[i][l]).sum::<f64>() / weights.len() as f64).max(f64::MIN_POSITIVE).ln())
            .collect();
        linear_fit(&xs, &ys).1
    };
    let all: Vec<usize> = (0..loops).collect();
    let ys: Vec<f64> = keep.iter().map(|&i| (per_loop[i].iter().sum::<f64>() / loops as f64).ln()).collect();
    let (intercept, slope) = linear_fit(&xs, &ys);
    debug_assert_eq!(slope, fit_with(&all));
    let mut rng = SeedTree::new(seed).child(stream::BOOTSTRAP).rng();
    let mut slopes: Vec<f64> = (0..resamples)
        .map(|_| {
            let pick: Vec<usize> = (0..loops).map(|_| rng.random_range(0..loops)).collect();
            fit_with(&pick)
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let (ci_low, ci_high) = if slopes.is_empty() { (slope, slope) } else { (quantile_sorted(&slopes, tail), quantile_sorted(&slopes, 1.0 - tail)) };
    Ok(ConvergenceFit { slope, intercept, ci_low, ci_high, points: keep.len() })
}

/// Fit for one (alpha, method, p) slice of a table.
pub fn fit_from_table(table: &ErrorTable, alpha: f64, method: Method, p: f64, resamples: usize, seed: u64) -> Result<ConvergenceFit> {
    let mut rows: Vec<&ErrorRow> = table.rows.iter().filter(|r| r.alpha == alpha && r.method == method && r.p == p).collect();
    rows.sort_by_key(|r| r.k);
    let ns: Vec<f64> = rows.iter().map(|r| (1u64 << r.k) as f64).collect();
    let per_loop: Vec<Vec<f64>> = rows.iter().map(|r| r.loop_estimates.clone()).collect();
    fit_convergence_order(&ns, &per_loop, 0.95, resamples, seed)
}

/// Rate exponent (negative) of the jump part of the strong error bound:
/// `-(2 - alpha)/(2 alpha) - 1/(2p)` for the Gaussian scheme and
/// `-(p* - alpha)/(p* alpha)` with `p* = min(p, 2)` when small jumps are
/// omitted.
pub fn theory_exponent(scheme: Scheme, alpha: f64, p: f64) -> f64 {
    match scheme {
        Scheme::GaussianSmall => -((2.0 - alpha) / (2.0 * alpha) + 1.0 / (2.0 * p)),
        Scheme::OmitSmall => {
            let ps = p.min(2.0);
            -(ps - alpha) / (ps * alpha)
        }
    }
}
