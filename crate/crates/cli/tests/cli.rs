use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_levy-dc"));
    cmd.env_remove("LEVY_DC_SEED");
    cmd
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn artifacts(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| (a["path"].as_str().unwrap().to_owned(), a["sha256"].as_str().unwrap().to_owned()))
        .collect()
}

fn config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p
}

const TINY: [&str; 10] = ["--K", "7", "--ks", "3,4,5", "--loops", "3", "--trajectories", "4", "--p", "2,4"];

#[test]
fn simulate_is_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let args = ["simulate", "--alpha", "1.0", "--scheme", "2", "--n", "512", "--seed", "7"];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&run(&args, &a)), 0);
    assert_eq!(code(&run(&args, &b)), 0);
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    assert_eq!(fa, fb);
    for (rel, _) in &fa {
        assert_eq!(fs::read(a.join(rel)).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel}");
    }
    let path = fs::read_to_string(a.join(&fa[1].0)).unwrap();
    assert!(path.starts_with("t,x\n0,0\n"));
    assert!(!path.contains('\r'));
    let last = path.lines().last().unwrap();
    assert!(last.starts_with("1,"), "{last}");
    let m = manifest(&a);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["config"]["grid.n"], "512");
    assert!(m["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn seed_changes_the_path_and_env_sets_it() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ["simulate", "--alpha", "1.5", "--n", "64", "--K", "8"];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    run(&[&base[..], &["--seed", "3"]].concat(), &a);
    run(&[&base[..], &["--seed", "4"]].concat(), &b);
    let o = bin().args(base).arg("--out").arg(&c).env("LEVY_DC_SEED", "3").output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_ne!(artifacts(&a)[1].1, artifacts(&b)[1].1);
    assert_eq!(artifacts(&a)[1].1, artifacts(&c)[1].1);
    assert_eq!(manifest(&c)["seed"], 3);
}

#[test]
fn missing_alpha_is_a_configuration_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "scheme = 2\nseed = 1\n");
    let o = bin().arg("simulate").arg("-c").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("levy.alpha"), "{}", stderr(&o));
    assert!(!tmp.path().join("o").exists(), "nothing is written for a bad config");
}

#[test]
fn malformed_config_reports_line_and_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "# header\nlevy.alpha = 1.0\ngrid.n = many\n");
    let o = bin().arg("simulate").arg("-c").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("run.conf:3") && err.contains("grid.n"), "{err}");

    let cfg = config(tmp.path(), "levy.alpha = 1.0\nlevy.colour = red\n");
    let o = bin().arg("simulate").arg("-c").arg(&cfg).arg("--out").arg(tmp.path().join("o")).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("run.conf:2: key `levy.colour`: unknown key"), "{}", stderr(&o));

    let o = run(&["simulate", "--alpha", "1.0", "--n", "500"], &tmp.path().join("o"));
    assert_eq!(code(&o), 2, "n must be a power of two");
    let o = run(&["simulate", "--alpha", "2.5"], &tmp.path().join("o"));
    assert_eq!(code(&o), 2);
}

#[test]
fn trajectories_flag_writes_that_many_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", "--alpha", "0.5", "--n", "128", "--K", "9", "--trajectories", "3", "--method", "ar"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let paths: Vec<String> = artifacts(&out).into_iter().map(|a| a.0).filter(|p| p.starts_with("paths/")).collect();
    assert_eq!(paths, ["paths/ar_alpha0.5_n128_0000.csv", "paths/ar_alpha0.5_n128_0001.csv", "paths/ar_alpha0.5_n128_0002.csv"]);
    for p in &paths {
        assert!(out.join(p).is_file());
    }
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(code(&run(&["simulate", "--alpha", "1.5", "--n", "32", "--K", "6", "--seed", "9", "--x0", "-0.25"], &a)), 0);
    let b = tmp.path().join("b");
    let o = bin().arg("simulate").arg("-c").arg(a.join("config.resolved")).arg("--out").arg(&b).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(artifacts(&a), artifacts(&b));
}

#[test]
fn validate_passes_on_the_shipped_config_and_fails_under_fault() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/validate.conf");
    let quick = ["--validate.laplace_samples", "100000"];
    let ok = bin().arg("validate").arg("-c").arg(&cfg).args(quick).arg("--out").arg(tmp.path().join("ok")).output().unwrap();
    let text = String::from_utf8_lossy(&ok.stdout).into_owned();
    assert_eq!(code(&ok), 0, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 10, "{text}");
    assert!(text.lines().any(|l| l.starts_with("PASS jump_count")));

    let bad = bin()
        .arg("validate")
        .arg("-c")
        .arg(&cfg)
        .args(["--validate.fault", "corrupt-inverse-cdf", "--validate.laplace_samples", "1000"])
        .arg("--out")
        .arg(tmp.path().join("bad"))
        .output()
        .unwrap();
    assert_eq!(code(&bad), 1);
    let text = String::from_utf8_lossy(&bad.stdout).into_owned();
    assert!(text.lines().any(|l| l.starts_with("FAIL jump_size_ks")), "{text}");
    assert_eq!(manifest(&tmp.path().join("bad"))["status"], "failed");
    let csv = fs::read_to_string(tmp.path().join("bad/validation.csv")).unwrap();
    assert!(csv.starts_with("check,passed,statistic,bound,detail\n"));
}

#[test]
fn compare_writes_tables_and_plots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&[&["compare", "--alpha", "1.0,1.5"][..], &TINY].concat(), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = artifacts(&out).into_iter().map(|a| a.0).collect();
    for f in ["errors.csv", "differences.csv", "h.csv", "errors_alpha1.svg", "errors_alpha1.5.svg"] {
        assert!(names.iter().any(|n| n == f), "{f} missing from {names:?}");
    }
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert!(errors.starts_with("alpha,method,scheme,k,p,error,stderr,loops,excluded\n"));
    assert_eq!(errors.lines().count(), 1 + 2 * 2 * 3 * 2);
    let diffs = fs::read_to_string(out.join("differences.csv")).unwrap();
    assert!(diffs.starts_with("alpha,k,p,ar_minus_dc,stderr\n"));
    assert_eq!(diffs.lines().count(), 1 + 2 * 3 * 2);
    let svg = fs::read_to_string(out.join("errors_alpha1.5.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn single_method_compare_has_no_difference_table() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&[&["compare", "--alpha", "1.5", "--method", "ar"][..], &TINY].concat(), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let names: Vec<String> = artifacts(&out).into_iter().map(|a| a.0).collect();
    assert!(names.contains(&"errors.csv".to_owned()));
    assert!(!names.contains(&"differences.csv".to_owned()));
    assert!(!out.join("differences.csv").exists());
}

#[test]
fn results_do_not_depend_on_jobs() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [&["compare", "--alpha", "1.5", "--seed", "5"][..], &TINY].concat();
    let mut digests = Vec::new();
    for jobs in ["1", "3"] {
        let out = tmp.path().join(jobs);
        let o = run(&[&args[..], &["--jobs", jobs]].concat(), &out);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        digests.push(artifacts(&out));
    }
    let rerun = tmp.path().join("again");
    run(&[&args[..], &["--jobs", "3"]].concat(), &rerun);
    digests.push(artifacts(&rerun));
    assert_eq!(digests[0], digests[1]);
    assert_eq!(digests[1], digests[2]);
}

#[test]
fn convergence_needs_three_resolutions() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["convergence", "--alpha", "1.5", "--ks", "9,10"], &tmp.path().join("o"));
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grid.coarse_ks"), "{}", stderr(&o));
    let o = run(&["convergence", "--alpha", "1.5", "--ks", "9,9,10"], &tmp.path().join("o"));
    assert_eq!(code(&o), 2);
}

#[test]
fn convergence_self_test_recovers_half_order() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["convergence", "--self-test", "true", "--loops", "20"], &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("slopes.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let slope: f64 = row[4].parse().unwrap();
    let (lo, hi): (f64, f64) = (row[5].parse().unwrap(), row[6].parse().unwrap());
    assert!((slope + 0.5).abs() < 0.05, "{csv}");
    assert!(lo < -0.5 && -0.5 < hi, "{csv}");
}

#[test]
fn convergence_reports_slopes_with_theory_annotation() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&[&["convergence", "--alpha", "1.5", "--method", "dc", "--coupling", "brownian"][..], &TINY].concat(), &out);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("slopes.csv")).unwrap();
    assert!(csv.starts_with("alpha,method,scheme,p,slope,ci_low,ci_high,points,theory_exponent\n"));
    assert_eq!(csv.lines().count(), 3);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[..4], ["1.5", "dc", "2", "2"]);
    let theory: f64 = row[8].parse().unwrap();
    assert!((theory + (0.5 / 3.0 + 0.25)).abs() < 1e-6);
}
