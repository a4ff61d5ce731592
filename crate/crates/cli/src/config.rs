//! Flat `key = value` configuration with dotted keys.
//!
//! ```text
//! # comment
//! levy.alpha = [0.5, 1.0, 1.5]
//! cut.h_mode = "match-ar-variance"
//! grid.coarse_ks = 9, 10, 11, 12
//! ```
//!
//! Every key is declared in [`KEYS`]; the same table drives the `--key value`
//! command-line overrides and their short aliases.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Floats,
    Int,
    Ints,
    Text,
    Texts,
    Bool,
}

pub struct KeySpec {
    pub key: &'static str,
    pub aliases: &'static [&'static str],
    pub kind: Kind,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec { key: "levy.kind", aliases: &[], kind: Kind::Text, default: Some("truncated-stable"), help: "Levy measure family (truncated-stable)" },
    KeySpec { key: "levy.alpha", aliases: &["alpha"], kind: Kind::Floats, default: None, help: "stability index in (0, 2); a list for compare/convergence" },
    KeySpec { key: "cut.epsilon", aliases: &["epsilon"], kind: Kind::Float, default: Some("0.1"), help: "exponent of the dynamic cut, in (0, 1)" },
    KeySpec { key: "cut.h", aliases: &["h"], kind: Kind::Float, default: None, help: "scale of the dynamic cut; overrides cut.h_mode" },
    KeySpec { key: "cut.h_mode", aliases: &[], kind: Kind::Text, default: Some("match-ar-variance"), help: "match-ar-variance | n-power" },
    KeySpec { key: "cut.h_integration", aliases: &[], kind: Kind::Text, default: Some("trapezoid:1024"), help: "time rule for variance matching: trapezoid[:N] | adaptive" },
    KeySpec { key: "cut.size_law", aliases: &[], kind: Kind::Text, default: Some("pooled"), help: "size of a jump at arrival t: pooled (closed form F_th) | conditional" },
    KeySpec { key: "cut.T", aliases: &["T"], kind: Kind::Float, default: Some("1"), help: "time horizon" },
    KeySpec { key: "ar.threshold_eps", aliases: &[], kind: Kind::Float, default: Some("0.01"), help: "fixed cut of the baseline method" },
    KeySpec { key: "sde.example", aliases: &[], kind: Kind::Text, default: Some("sin-cos"), help: "coefficient set (sin-cos)" },
    KeySpec { key: "sde.sigma_mode", aliases: &[], kind: Kind::Text, default: Some("closed-form"), help: "closed-form | quadrature | disabled" },
    KeySpec { key: "sde.x0", aliases: &["x0"], kind: Kind::Float, default: Some("0"), help: "initial value" },
    KeySpec { key: "sde.compensate", aliases: &[], kind: Kind::Bool, default: Some("true"), help: "subtract the large-jump compensator" },
    KeySpec { key: "noise.small_jump_coupling", aliases: &["coupling"], kind: Kind::Text, default: Some("independent"), help: "independent | brownian" },
    KeySpec { key: "grid.benchmark_k", aliases: &["K"], kind: Kind::Int, default: Some("14"), help: "benchmark resolution 2^K" },
    KeySpec { key: "grid.coarse_ks", aliases: &["ks"], kind: Kind::Ints, default: Some("[9, 10, 11, 12]"), help: "coarse resolutions 2^k" },
    KeySpec { key: "grid.n", aliases: &["n"], kind: Kind::Int, default: None, help: "regular steps of a simulated path (power of two)" },
    KeySpec { key: "scheme", aliases: &[], kind: Kind::Int, default: Some("2"), help: "1 omits small jumps, 2 replaces them by a Gaussian" },
    KeySpec { key: "method", aliases: &[], kind: Kind::Texts, default: Some("[dc, ar]"), help: "dc | ar, or a list of both" },
    KeySpec { key: "mc.loops", aliases: &["loops"], kind: Kind::Int, default: Some("20"), help: "independent loops (batches)" },
    KeySpec { key: "mc.trajectories", aliases: &["trajectories"], kind: Kind::Int, default: Some("100"), help: "trajectories per loop; paths written by simulate" },
    KeySpec { key: "p", aliases: &[], kind: Kind::Floats, default: Some("[2, 4, 6, 8, 10]"), help: "moment orders of the strong error" },
    KeySpec { key: "seed", aliases: &[], kind: Kind::Int, default: Some("1"), help: "master seed (env LEVY_DC_SEED)" },
    KeySpec { key: "convergence.resamples", aliases: &["resamples"], kind: Kind::Int, default: Some("1000"), help: "bootstrap resamples of the slope" },
    KeySpec { key: "convergence.self_test", aliases: &["self-test"], kind: Kind::Bool, default: Some("false"), help: "fit synthetic errors with known slope -1/2" },
    KeySpec { key: "validate.count_runs", aliases: &[], kind: Kind::Int, default: Some("1000"), help: "replications of the jump-count check" },
    KeySpec { key: "validate.ks_samples", aliases: &[], kind: Kind::Int, default: Some("5000"), help: "sample size of the jump-size KS test" },
    KeySpec { key: "validate.laplace_samples", aliases: &[], kind: Kind::Int, default: Some("100000"), help: "samples of the Laplace check" },
    KeySpec { key: "validate.fault", aliases: &[], kind: Kind::Text, default: None, help: "test hook: corrupt-inverse-cdf" },
];

pub fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|s| s.key == key)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { path: PathBuf, line: usize },
    Flag,
    Env(&'static str),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { path, line } => write!(f, "{}:{line}", path.display()),
            Origin::Flag => f.write_str("command line"),
            Origin::Env(var) => write!(f, "environment {var}"),
            Origin::Default => f.write_str("defaults"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub origin: Origin,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    pub fn new(origin: Origin, key: Option<&str>, message: impl Into<String>) -> Self {
        Self { origin, key: key.map(str::to_owned), message: message.into() }
    }

    pub fn missing(key: &str) -> Self {
        Self::new(Origin::Default, Some(key), "required key is not set")
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.origin)?;
        if let Some(k) = &self.key {
            write!(f, ": key `{k}`")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Floats(Vec<f64>),
    Int(u64),
    Ints(Vec<u64>),
    Text(String),
    Texts(Vec<String>),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, xs: &[T]) -> fmt::Result {
            let parts: Vec<String> = xs.iter().map(ToString::to_string).collect();
            write!(f, "[{}]", parts.join(", "))
        }
        match self {
            Value::Float(x) => write!(f, "{x:e}"),
            Value::Floats(xs) => list(f, &xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>()),
            Value::Int(k) => write!(f, "{k}"),
            Value::Ints(ks) => list(f, ks),
            Value::Text(s) => write!(f, "\"{s}\""),
            Value::Texts(ss) => list(f, &ss.iter().map(|s| format!("\"{s}\"")).collect::<Vec<_>>()),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    for q in ['"', '\''] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return &s[1..s.len() - 1];
        }
    }
    s
}

/// Drops a trailing `# comment` that is not inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut quote = None;
    for (i, c) in line.char_indices() {
        match (c, quote) {
            ('"' | '\'', None) => quote = Some(c),
            (c, Some(q)) if c == q => quote = None,
            ('#', None) => return &line[..i],
            _ => {}
        }
    }
    line
}

fn split_items(raw: &str) -> Result<Vec<String>, String> {
    let raw = raw.trim();
    let inner = match (raw.strip_prefix('['), raw.ends_with(']')) {
        (Some(rest), true) => &rest[..rest.len() - 1],
        (Some(_), false) => return Err("list is missing its closing `]`".into()),
        (None, _) => raw,
    };
    if inner.trim().is_empty() {
        return Err("empty value".into());
    }
    inner
        .split(',')
        .map(|item| {
            let item = unquote(item);
            if item.is_empty() {
                Err("empty list item".into())
            } else {
                Ok(item.to_owned())
            }
        })
        .collect()
}

fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    let items = split_items(raw)?;
    let float = |s: &str| -> Result<f64, String> {
        s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("expected a number, got {s:?}"))
    };
    let int = |s: &str| -> Result<u64, String> { s.parse::<u64>().map_err(|_| format!("expected a nonnegative integer, got {s:?}")) };
    let single = || -> Result<&str, String> {
        match items.as_slice() {
            [one] => Ok(one.as_str()),
            _ => Err(format!("expected a single value, got {} items", items.len())),
        }
    };
    Ok(match kind {
        Kind::Float => Value::Float(float(single()?)?),
        Kind::Floats => Value::Floats(items.iter().map(|s| float(s)).collect::<Result<_, _>>()?),
        Kind::Int => Value::Int(int(single()?)?),
        Kind::Ints => Value::Ints(items.iter().map(|s| int(s)).collect::<Result<_, _>>()?),
        Kind::Text => Value::Text(single()?.to_owned()),
        Kind::Texts => Value::Texts(items),
        Kind::Bool => Value::Bool(match single()? {
            "true" | "yes" | "on" | "1" => true,
            "false" | "no" | "off" | "0" => false,
            other => return Err(format!("expected true or false, got {other:?}")),
        }),
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: Value,
    origin: Origin,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<&'static str, Entry>,
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let origin = Origin::File { path: path.to_owned(), line: i + 1 };
            let line = strip_comment(line).trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::new(origin.clone(), None, format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if let Some(prev) = spec(key).and_then(|s| cfg.entries.get(s.key)) {
                return Err(ConfigError::new(origin, Some(key), format!("duplicate key (first set at {})", prev.origin)));
            }
            cfg.set(key, raw, origin)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(Origin::File { path: path.to_owned(), line: 0 }, None, format!("cannot read: {e}")))?;
        Self::parse(&text, path)
    }

    /// Sets `key` from raw text, replacing any earlier value.
    pub fn set(&mut self, key: &str, raw: &str, origin: Origin) -> Result<(), ConfigError> {
        let spec = spec(key).ok_or_else(|| ConfigError::new(origin.clone(), Some(key), "unknown key"))?;
        let value = parse_value(spec.kind, raw).map_err(|m| ConfigError::new(origin.clone(), Some(key), m))?;
        self.entries.insert(spec.key, Entry { value, origin });
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn entry(&self, key: &str) -> Option<&Entry> {
        debug_assert!(spec(key).is_some(), "undeclared key {key}");
        self.entries.get(key)
    }

    /// An error about the value stored under `key`, located at its origin.
    pub fn invalid(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let origin = self.entry(key).map_or(Origin::Default, |e| e.origin.clone());
        ConfigError::new(origin, Some(key), message)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        match self.entry(key)?.value {
            Value::Float(x) => Some(x),
            _ => None,
        }
    }

    pub fn f64s(&self, key: &str) -> Option<Vec<f64>> {
        match &self.entry(key)?.value {
            Value::Floats(xs) => Some(xs.clone()),
            _ => None,
        }
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        match self.entry(key)?.value {
            Value::Int(k) => Some(k),
            _ => None,
        }
    }

    pub fn u64s(&self, key: &str) -> Option<Vec<u64>> {
        match &self.entry(key)?.value {
            Value::Ints(ks) => Some(ks.clone()),
            _ => None,
        }
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        match &self.entry(key)?.value {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn texts(&self, key: &str) -> Option<&[String]> {
        match &self.entry(key)?.value {
            Value::Texts(ss) => Some(ss),
            _ => None,
        }
    }

    pub fn bool(&self, key: &str) -> Option<bool> {
        match self.entry(key)?.value {
            Value::Bool(b) => Some(b),
            _ => None,
        }
    }

    /// Parses a text key with `FromStr`, reporting failures against the key.
    pub fn parsed<T: std::str::FromStr<Err = String>>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        self.text(key).map(|s| s.parse::<T>().map_err(|m| self.invalid(key, m))).transpose()
    }

    /// Resolved values in key order, for the run manifest.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, e)| (k.to_string(), e.value.to_string())).collect()
    }

    /// Sets every unset key that has a default.
    pub fn fill_defaults(&mut self) {
        for s in KEYS {
            if let (Some(d), false) = (s.default, self.contains(s.key)) {
                self.set(s.key, d, Origin::Default).expect("defaults parse");
            }
        }
    }

    /// The resolved configuration as a config file that reproduces it.
    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, e)| format!("{k} = {}\n", e.value)).collect()
    }
}
