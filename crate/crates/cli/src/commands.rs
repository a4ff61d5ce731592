//! The four subcommands. Each one resolves its settings from a fully
//! defaulted [`Config`] first, so configuration problems surface before any
//! output is written.

use std::fmt::{self, Write};
use std::io;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde_json::json;

use levy_dc::cutting::Method;
use levy_dc::dc::CutParams;
use levy_dc::engine::{prepare_noise, simulate_path, Scheme, SimOptions};
use levy_dc::harness::{fit_convergence_order, fit_from_table, run_comparison, theory_exponent, ErrorTable, ExperimentConfig, HMode};
use levy_dc::rng::SeedTree;
use levy_dc::sde::SinCos;
use levy_dc::validation::{validate, Fault, ValidationOptions};
use levy_dc::TruncatedStable;

use crate::config::{Config, ConfigError};
use crate::manifest::Manifest;
use crate::plot::{log_error_chart, Series};

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// A check ran and failed.
    Check(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Check(_) | CliError::Run(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "configuration error: {e}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<levy_dc::Error> for CliError {
    fn from(e: levy_dc::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Validate,
    Compare,
    Convergence,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Validate => "validate",
            Command::Compare => "compare",
            Command::Convergence => "convergence",
        }
    }

    /// Defaults that differ from the shared key table.
    pub fn preset(self, cfg: &mut Config) {
        if self == Command::Simulate {
            for (key, value) in [("method", "dc"), ("mc.trajectories", "1")] {
                if !cfg.contains(key) {
                    cfg.set(key, value, crate::config::Origin::Default).expect("preset parses");
                }
            }
        }
    }
}

fn get<T>(key: &str, v: Option<T>) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::missing(key))
}

fn alphas(cfg: &Config) -> Result<Vec<f64>, ConfigError> {
    let kind = get("levy.kind", cfg.text("levy.kind"))?;
    if kind != "truncated-stable" {
        return Err(cfg.invalid("levy.kind", format!("unsupported measure {kind:?} (expected \"truncated-stable\")")));
    }
    let a = get("levy.alpha", cfg.f64s("levy.alpha"))?;
    if let Some(bad) = a.iter().find(|&&a| !(a > 0.0 && a < 2.0)) {
        return Err(cfg.invalid("levy.alpha", format!("must lie in (0, 2), got {bad}")));
    }
    Ok(a)
}

fn single_alpha(cfg: &Config) -> Result<f64, ConfigError> {
    match alphas(cfg)?.as_slice() {
        [a] => Ok(*a),
        many => Err(cfg.invalid("levy.alpha", format!("this command takes one value, got {}", many.len()))),
    }
}

fn methods(cfg: &Config) -> Result<Vec<Method>, ConfigError> {
    let names = get("method", cfg.texts("method"))?;
    let ms: Vec<Method> = names.iter().map(|s| s.parse::<Method>()).collect::<Result<_, _>>().map_err(|m| cfg.invalid("method", m))?;
    if ms.len() > 2 || (ms.len() == 2 && ms[0] == ms[1]) {
        return Err(cfg.invalid("method", "expected one method or the pair [dc, ar]"));
    }
    Ok(ms)
}

fn count(cfg: &Config, key: &str) -> Result<usize, ConfigError> {
    let v = get(key, cfg.u64(key))?;
    if v == 0 {
        return Err(cfg.invalid(key, "must be positive"));
    }
    usize::try_from(v).map_err(|_| cfg.invalid(key, "too large"))
}

fn exponent(cfg: &Config, key: &str, k: u64) -> Result<u32, ConfigError> {
    if k > 30 {
        return Err(cfg.invalid(key, format!("resolution 2^{k} is beyond the supported 2^30")));
    }
    Ok(k as u32)
}

fn coefficients(cfg: &Config) -> Result<SinCos, ConfigError> {
    match get("sde.example", cfg.text("sde.example"))? {
        "sin-cos" => Ok(SinCos),
        other => Err(cfg.invalid("sde.example", format!("unknown example {other:?} (expected \"sin-cos\")"))),
    }
}

/// Everything an experiment needs; library-level checks are reported as
/// configuration errors.
pub fn experiment(cfg: &Config) -> Result<ExperimentConfig, ConfigError> {
    let scheme_no = get("scheme", cfg.u64("scheme"))?;
    let scheme = u8::try_from(scheme_no)
        .ok()
        .and_then(Scheme::from_number)
        .ok_or_else(|| cfg.invalid("scheme", format!("expected 1 or 2, got {scheme_no}")))?;
    let h_mode = match cfg.f64("cut.h") {
        Some(h) if h > 0.0 => HMode::Fixed(h),
        Some(h) => return Err(cfg.invalid("cut.h", format!("must be positive, got {h}"))),
        None => match get("cut.h_mode", cfg.text("cut.h_mode"))? {
            "match-ar-variance" => HMode::MatchArVariance,
            "n-power" => HMode::NPower,
            other => return Err(cfg.invalid("cut.h_mode", format!("unknown mode {other:?} (expected \"match-ar-variance\" or \"n-power\")"))),
        },
    };
    let benchmark_k = exponent(cfg, "grid.benchmark_k", get("grid.benchmark_k", cfg.u64("grid.benchmark_k"))?)?;
    let coarse_ks = get("grid.coarse_ks", cfg.u64s("grid.coarse_ks"))?
        .into_iter()
        .map(|k| exponent(cfg, "grid.coarse_ks", k))
        .collect::<Result<Vec<_>, _>>()?;
    let sim = SimOptions {
        scheme,
        x0: get("sde.x0", cfg.f64("sde.x0"))?,
        sigma_mode: get("sde.sigma_mode", cfg.parsed("sde.sigma_mode")?)?,
        compensate: get("sde.compensate", cfg.bool("sde.compensate"))?,
        coupling: get("noise.small_jump_coupling", cfg.parsed("noise.small_jump_coupling")?)?,
    };
    Ok(ExperimentConfig {
        alphas: alphas(cfg)?,
        scheme,
        methods: methods(cfg)?,
        eps_dc: get("cut.epsilon", cfg.f64("cut.epsilon"))?,
        eps_ar: get("ar.threshold_eps", cfg.f64("ar.threshold_eps"))?,
        dc_size_law: get("cut.size_law", cfg.parsed("cut.size_law")?)?,
        h_mode,
        h_integration: get("cut.h_integration", cfg.parsed("cut.h_integration")?)?,
        benchmark_k,
        coarse_ks,
        ps: get("p", cfg.f64s("p"))?,
        loops: count(cfg, "mc.loops")?,
        trajectories: count(cfg, "mc.trajectories")?,
        seed: get("seed", cfg.u64("seed"))?,
        horizon: get("cut.T", cfg.f64("cut.T"))?,
        sim,
    })
}

fn checked(e: ExperimentConfig) -> Result<ExperimentConfig, ConfigError> {
    e.validate().map_err(|err| ConfigError::new(crate::config::Origin::Default, None, err.to_string()))?;
    Ok(e)
}

#[derive(Debug)]
pub struct SimulatePlan {
    exp: ExperimentConfig,
    alpha: f64,
    n: usize,
    coeffs: SinCos,
}

#[derive(Debug)]
pub struct ValidatePlan {
    alpha: f64,
    params: CutParams,
    opts: ValidationOptions,
}

#[derive(Debug)]
pub struct ComparePlan {
    exp: ExperimentConfig,
    coeffs: SinCos,
}

#[derive(Debug)]
pub struct ConvergencePlan {
    /// `None` in self-test mode.
    exp: Option<ExperimentConfig>,
    ks: Vec<u32>,
    loops: usize,
    seed: u64,
    resamples: usize,
    coeffs: SinCos,
}

#[derive(Debug)]
pub enum Plan {
    Simulate(SimulatePlan),
    Validate(ValidatePlan),
    Compare(ComparePlan),
    Convergence(ConvergencePlan),
}

impl Plan {
    pub fn resolve(command: Command, cfg: &Config) -> Result<Plan, ConfigError> {
        Ok(match command {
            Command::Simulate => {
                let alpha = single_alpha(cfg)?;
                let exp = experiment(cfg)?;
                if exp.methods.len() != 1 {
                    return Err(cfg.invalid("method", "simulate takes a single method"));
                }
                CutParams::new(exp.eps_dc, 1.0, exp.horizon).map_err(|e| cfg.invalid("cut.epsilon", e.to_string()))?;
                let top = 1u64 << exp.benchmark_k;
                let n = cfg.u64("grid.n").unwrap_or(top);
                if !n.is_power_of_two() || n > top {
                    return Err(cfg.invalid("grid.n", format!("must be a power of two not above 2^grid.benchmark_k = {top}, got {n}")));
                }
                Plan::Simulate(SimulatePlan { alpha, n: n as usize, coeffs: coefficients(cfg)?, exp })
            }
            Command::Validate => {
                let alpha = single_alpha(cfg)?;
                let exp = experiment(cfg)?;
                let model = TruncatedStable::new(alpha).map_err(|e| cfg.invalid("levy.alpha", e.to_string()))?;
                let h = exp.h_for(&model).map_err(|e| cfg.invalid("cut.h", e.to_string()))?;
                let params =
                    CutParams::new(exp.eps_dc, h, exp.horizon).map_err(|e| cfg.invalid("cut.epsilon", e.to_string()))?.with_size_law(exp.dc_size_law);
                let fault = match cfg.text("validate.fault") {
                    None => None,
                    Some("corrupt-inverse-cdf") => Some(Fault::CorruptInverseCdf),
                    Some(other) => return Err(cfg.invalid("validate.fault", format!("unknown fault {other:?}"))),
                };
                let opts = ValidationOptions {
                    seed: exp.seed,
                    count_runs: count(cfg, "validate.count_runs")?,
                    ks_samples: count(cfg, "validate.ks_samples")?,
                    laplace_samples: count(cfg, "validate.laplace_samples")?,
                    fault,
                    ..ValidationOptions::default()
                };
                Plan::Validate(ValidatePlan { alpha, params, opts })
            }
            Command::Compare => Plan::Compare(ComparePlan { exp: checked(experiment(cfg)?)?, coeffs: coefficients(cfg)? }),
            Command::Convergence => {
                let self_test = get("convergence.self_test", cfg.bool("convergence.self_test"))?;
                let ks: Vec<u32> = get("grid.coarse_ks", cfg.u64s("grid.coarse_ks"))?
                    .into_iter()
                    .map(|k| exponent(cfg, "grid.coarse_ks", k))
                    .collect::<Result<_, _>>()?;
                let mut distinct = ks.clone();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() < 3 {
                    return Err(cfg.invalid("grid.coarse_ks", format!("a slope fit needs at least 3 distinct resolutions, got {}", distinct.len())));
                }
                let exp = if self_test { None } else { Some(checked(experiment(cfg)?)?) };
                Plan::Convergence(ConvergencePlan {
                    exp,
                    ks: distinct,
                    loops: count(cfg, "mc.loops")?,
                    seed: get("seed", cfg.u64("seed"))?,
                    resamples: count(cfg, "convergence.resamples")?,
                    coeffs: coefficients(cfg)?,
                })
            }
        })
    }

    /// Runs the plan, writing artifacts through `manifest`.
    pub fn execute(&self, manifest: &mut Manifest) -> Result<(), CliError> {
        match self {
            Plan::Simulate(p) => simulate(p, manifest),
            Plan::Validate(p) => validate_cmd(p, manifest),
            Plan::Compare(p) => compare(p, manifest),
            Plan::Convergence(p) => convergence(p, manifest),
        }
    }
}

fn simulate(plan: &SimulatePlan, manifest: &mut Manifest) -> Result<(), CliError> {
    let exp = &plan.exp;
    let model = TruncatedStable::new(plan.alpha)?;
    let method = exp.methods[0];
    let h = if method == Method::Dc { exp.h_for(&model)? } else { f64::NAN };
    if method == Method::Dc {
        manifest.set("h", json!(h));
    }
    let cutting = exp.cutting(method, h)?;
    let opts = SimOptions { scheme: exp.scheme, ..exp.sim };
    let paths: Vec<String> = (0..exp.trajectories)
        .into_par_iter()
        .map(|i| -> Result<String, CliError> {
            let noise = prepare_noise(exp.trajectory_node(0, i), exp.benchmark_k, cutting.as_ref(), &model)?;
            let path = simulate_path(&plan.coeffs, &model, cutting.as_ref(), &noise, plan.n, &opts)?;
            let mut csv = String::from("t,x\n");
            for (t, x) in path.times.iter().zip(&path.values) {
                let _ = writeln!(csv, "{t},{x}");
            }
            Ok(csv)
        })
        .collect::<Result<_, _>>()?;
    for (i, csv) in paths.iter().enumerate() {
        manifest.write(&format!("paths/{method}_alpha{}_n{}_{i:04}.csv", plan.alpha, plan.n), csv)?;
    }
    println!("simulate: {} {method} path(s), alpha = {}, n = {}, scheme {}", paths.len(), plan.alpha, plan.n, exp.scheme.number());
    Ok(())
}

fn validate_cmd(plan: &ValidatePlan, manifest: &mut Manifest) -> Result<(), CliError> {
    let model = TruncatedStable::new(plan.alpha)?;
    manifest.set("h", json!(plan.params.h()));
    let report = validate(&model, &plan.params, &plan.opts)?;
    manifest.write("validation.csv", &report.to_csv())?;
    for c in &report.checks {
        println!("{} {:<24} {:>12.4e}  bound {:<10.3e} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.statistic, c.bound, c.detail);
    }
    let failed: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failed.join(", ")))
    }
}

fn h_csv(table: &ErrorTable) -> String {
    let mut s = String::from("alpha,h\n");
    for (a, h) in &table.h_values {
        let _ = writeln!(s, "{a},{h:e}");
    }
    s
}

fn charts(exp: &ExperimentConfig, table: &ErrorTable, manifest: &mut Manifest) -> io::Result<()> {
    for &alpha in &exp.alphas {
        let mut series = Vec::new();
        for (mi, &method) in exp.methods.iter().enumerate() {
            for (pi, &p) in exp.ps.iter().enumerate() {
                let points = exp.coarse_ks.iter().filter_map(|&k| table.row(alpha, method, k, p).map(|r| (k as f64, r.error))).collect();
                series.push(Series { label: format!("{method} p = {p}"), points, dashed: mi == 1, color: pi });
            }
        }
        let title = format!("Strong errors, alpha = {alpha}, scheme {}", exp.scheme.number());
        manifest.write(&format!("errors_alpha{alpha}.svg"), &log_error_chart(&title, &series))?;
    }
    Ok(())
}

fn run_table(exp: &ExperimentConfig, coeffs: &SinCos, manifest: &mut Manifest) -> Result<ErrorTable, CliError> {
    let table = run_comparison(exp, coeffs)?;
    manifest.set("h", json!(table.h_values.iter().map(|(a, h)| json!({ "alpha": a, "h": h })).collect::<Vec<_>>()));
    manifest.write("errors.csv", &table.to_csv())?;
    if !table.h_values.is_empty() {
        manifest.write("h.csv", &h_csv(&table))?;
    }
    for r in table.rows.iter().filter(|r| r.invalid) {
        log::warn!("alpha {} {}: {} diverged trajectories exceed the allowed share", r.alpha, r.method, r.excluded);
    }
    Ok(table)
}

fn compare(plan: &ComparePlan, manifest: &mut Manifest) -> Result<(), CliError> {
    let exp = &plan.exp;
    let table = run_table(exp, &plan.coeffs, manifest)?;
    if exp.methods.len() == 2 {
        manifest.write("differences.csv", &table.differences_csv())?;
        for &alpha in &exp.alphas {
            let cells: Vec<f64> = table.differences.iter().filter(|d| d.alpha == alpha).map(|d| d.difference).collect();
            let positive = cells.iter().filter(|&&d| d > 0.0).count();
            let mean = cells.iter().sum::<f64>() / cells.len().max(1) as f64;
            println!(
                "compare: alpha = {alpha}: {} - {} positive in {positive}/{} cells, mean {mean:.4e}",
                exp.methods[1],
                exp.methods[0],
                cells.len()
            );
        }
    } else {
        println!("compare: {} rows for {}", table.rows.len(), exp.methods[0]);
    }
    charts(exp, &table, manifest)?;
    Ok(())
}

const SELF_TEST_SLOPE: f64 = -0.5;

fn convergence(plan: &ConvergencePlan, manifest: &mut Manifest) -> Result<(), CliError> {
    let mut csv = String::from("alpha,method,scheme,p,slope,ci_low,ci_high,points,theory_exponent\n");
    let Some(exp) = &plan.exp else {
        // errors 2 n^{-1/2} with 5% multiplicative noise per loop
        let ns: Vec<f64> = plan.ks.iter().map(|&k| (1u64 << k) as f64).collect();
        let mut rng = SeedTree::new(plan.seed).child(0x53_454c_4654).rng();
        let per_loop: Vec<Vec<f64>> = ns
            .iter()
            .map(|&n| (0..plan.loops).map(|_| 2.0 * n.powf(SELF_TEST_SLOPE) * (0.05 * rng.sample::<f64, _>(StandardNormal)).exp()).collect())
            .collect();
        let fit = fit_convergence_order(&ns, &per_loop, 0.95, plan.resamples, plan.seed)?;
        let _ = writeln!(csv, ",synthetic,,,{:.6},{:.6},{:.6},{},{SELF_TEST_SLOPE}", fit.slope, fit.ci_low, fit.ci_high, fit.points);
        manifest.write("slopes.csv", &csv)?;
        let recovered = (fit.slope - SELF_TEST_SLOPE).abs() < 0.05;
        println!("convergence self-test: slope {:.4} [{:.4}, {:.4}], expected {SELF_TEST_SLOPE}", fit.slope, fit.ci_low, fit.ci_high);
        return if recovered { Ok(()) } else { Err(CliError::Check(format!("self-test slope {:.4} is not {SELF_TEST_SLOPE}", fit.slope))) };
    };
    let table = run_table(exp, &plan.coeffs, manifest)?;
    for &alpha in &exp.alphas {
        for &method in &exp.methods {
            for &p in &exp.ps {
                let fit = fit_from_table(&table, alpha, method, p, plan.resamples, exp.seed)?;
                let theory = theory_exponent(exp.scheme, alpha, p);
                let _ = writeln!(
                    csv,
                    "{alpha},{method},{},{p},{:.6},{:.6},{:.6},{},{theory:.6}",
                    exp.scheme.number(),
                    fit.slope,
                    fit.ci_low,
                    fit.ci_high,
                    fit.points
                );
                println!(
                    "convergence: alpha = {alpha} {method} p = {p}: slope {:.4} [{:.4}, {:.4}] (theory {theory:.4})",
                    fit.slope, fit.ci_low, fit.ci_high
                );
            }
        }
    }
    manifest.write("slopes.csv", &csv)?;
    charts(exp, &table, manifest)?;
    Ok(())
}
