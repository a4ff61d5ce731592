//! Self-checks of a (measure, cut) pair: the statistical and closed-form
//! identities the dynamic cut relies on, each reported with its statistic.

use rand::Rng;
use rand_distr::Open01;

use crate::dc::{self, CutParams};
use crate::levy::{self, LevyMeasure, Side};
use crate::quad::{integrate, Tolerance};
use crate::rng::{stream, SeedTree};
use crate::stats::{ks_test, mean_stderr};
use crate::Result;

/// Deliberate defects for exercising the checks themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The size sampler feeds `u^2` instead of `u` into the inverse CDF.
    CorruptInverseCdf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    pub count_runs: usize,
    pub ks_samples: usize,
    pub ks_level: f64,
    pub laplace_r: Vec<f64>,
    pub laplace_samples: usize,
    pub laplace_tolerance: f64,
    pub fault: Option<Fault>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            count_runs: 1000,
            ks_samples: 5000,
            ks_level: 0.01,
            laplace_r: vec![0.5, 1.0, 2.0],
            laplace_samples: 100_000,
            laplace_tolerance: 0.05,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub statistic: f64,
    pub bound: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,passed,statistic,bound,detail\n");
        for c in &self.checks {
            out.push_str(&format!("{},{},{:e},{:e},\"{}\"\n", c.name, c.passed, c.statistic, c.bound, c.detail.replace('"', "'")));
        }
        out
    }

    fn push(&mut self, name: &str, passed: bool, statistic: f64, bound: f64, detail: String) {
        self.checks.push(CheckOutcome { name: name.into(), passed, statistic, bound, detail });
    }
}

fn rel(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

pub fn validate(model: &dyn LevyMeasure, params: &CutParams, opts: &ValidationOptions) -> Result<ValidationReport> {
    let mut report = ValidationReport::default();
    let root = SeedTree::new(opts.seed).child(stream::VALIDATION);
    let horizon = params.horizon();
    let eps = params.epsilon();

    // generalized inverse against the tail
    let mut worst = 0.0f64;
    for t in log_grid(1e-3, 1e6, 40) {
        for side in Side::BOTH {
            let x = levy::tau(model, side, t)?;
            if x > 0.0 && x < model.support_radius(side) {
                worst = worst.max(rel(model.tail(side, x), 1.0 / t));
            }
        }
    }
    report.push("tau_inverse", worst <= 1e-10, worst, 1e-10, "max relative |N(tau(t)) - 1/t|".into());

    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).chain(log_grid(1e-4, 0.05, 8)).collect();
    match levy::check_tail_pruitt_equivalence(model, &grid) {
        Ok(p) => report.push(
            "tail_pruitt_equivalence",
            p.is_bounded(),
            p.max_ratio / p.min_ratio,
            f64::INFINITY,
            format!("ratio band [{:.4}, {:.4}]", p.min_ratio, p.max_ratio),
        ),
        Err(e) => report.push("tail_pruitt_equivalence", false, f64::NAN, f64::INFINITY, e.to_string()),
    }

    let zeta = 1.0 / model.stability_index();
    let pairs: Vec<(f64, f64)> =
        log_grid(1e-3, 1.0, 12).into_iter().flat_map(|t| log_grid(1.01, 100.0, 12).into_iter().map(move |r| (t, r))).collect();
    let margin = levy::tau_scaling_margin(model, zeta, &pairs)?;
    report.push("tau_scaling", margin <= 1.0 + 1e-12, margin, 1.0, format!("max tau(Rt) / (R^{zeta:.4} tau(t))"));

    // closed-form intensity against quadrature of N(threshold(s))
    let mut worst = 0.0f64;
    for side in Side::BOTH {
        if model.is_null_side(side) {
            continue;
        }
        let oracle = integrate(
            |s: f64| if s <= 0.0 { 0.0 } else { model.tail(side, dc::threshold(params, model, side, s).unwrap_or(0.0)) },
            0.0,
            horizon,
            Tolerance::new(1e-12, 1e-11),
        )?
        .value;
        worst = worst.max(rel(dc::intensity_lambda(params, model, side, horizon)?, oracle));
    }
    report.push("intensity_quadrature", worst <= 1e-8, worst, 1e-8, format!("lambda(T) vs quadrature, T = {horizon}"));

    let mut rng = root.child(1).rng();
    let counts: Vec<f64> =
        (0..opts.count_runs).map(|_| dc::sample_jump_times(params, model, Side::Pos, &mut rng).len() as f64).collect();
    let (mean, se) = mean_stderr(&counts);
    let expected = dc::intensity_lambda(params, model, Side::Pos, horizon)?;
    let z = if se > 0.0 { (mean - expected).abs() / se } else { f64::INFINITY * (mean - expected).abs() };
    report.push(
        "jump_count",
        z <= 3.0,
        z,
        3.0,
        format!("mean {mean:.4} vs lambda(T) = {expected:.4} over {} runs", opts.count_runs),
    );

    // quantile round trip at an interior time, including the branch point
    let t_mid = 0.5 * horizon;
    let mut worst = 0.0f64;
    let levels = [1e-6, 0.01, 0.5 * eps, eps, eps + 1e-9, 0.3, 0.5, 0.9, 0.999];
    for u in levels.into_iter().filter(|u| *u > 0.0 && *u < 1.0) {
        let x = dc::size_quantile(params, model, Side::Pos, t_mid, u)?;
        if x < model.support_radius(Side::Pos) {
            worst = worst.max((dc::size_cdf(params, model, Side::Pos, t_mid, x)? - u).abs());
        }
    }
    report.push("quantile_round_trip", worst <= 1e-10, worst, 1e-10, format!("|F(F^-1(u)) - u| at t = {t_mid}"));

    let mut rng = root.child(2).rng();
    let mut sizes = Vec::with_capacity(opts.ks_samples);
    for _ in 0..opts.ks_samples {
        let mut u: f64 = rng.sample(Open01);
        if opts.fault == Some(Fault::CorruptInverseCdf) {
            u *= u;
        }
        sizes.push(dc::size_quantile(params, model, Side::Pos, t_mid, u)?);
    }
    let ks = ks_test(&sizes, |x| dc::size_cdf(params, model, Side::Pos, t_mid, x).unwrap_or(f64::NAN), opts.ks_level);
    report.push(
        "jump_size_ks",
        ks.passes(),
        ks.statistic,
        ks.critical,
        format!("n = {}, p = {:.4}", opts.ks_samples, ks.p_value),
    );

    let mut rng = root.child(3).rng();
    match dc::empirical_laplace_check(params, model, horizon, &opts.laplace_r, opts.laplace_samples, &mut rng) {
        Ok(rows) => {
            for c in rows {
                report.push(
                    &format!("laplace_r{}", c.r),
                    c.rel_error <= opts.laplace_tolerance,
                    c.rel_error,
                    opts.laplace_tolerance,
                    format!("empirical {:.6} vs quadrature {:.6}", c.empirical, c.quadrature),
                );
            }
        }
        Err(e) => report.push("laplace", false, f64::NAN, opts.laplace_tolerance, e.to_string()),
    }

    Ok(report)
}
