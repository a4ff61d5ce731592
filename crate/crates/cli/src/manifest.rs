//! Run manifest: written before any result, rewritten with digests at the end.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.json";

const MODULES: [&str; 7] = ["levy_measure", "dc_cutting", "ar_cutting", "sde_model", "euler_engine", "error_harness", "experiment_cli"];

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Manifest {
    dir: PathBuf,
    doc: Value,
    artifacts: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn begin(dir: &Path, command: &str, argv: &[String], config: &BTreeMap<String, String>, seed: u64, jobs: Option<usize>) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let core = format!("levy-dc {}", levy_dc::VERSION);
        let cli = format!("levy-dc-cli {}", env!("CARGO_PKG_VERSION"));
        let modules: BTreeMap<&str, &str> = MODULES.iter().map(|&m| (m, if m == "experiment_cli" { cli.as_str() } else { core.as_str() })).collect();
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let doc = json!({
            "command": command,
            "argv": argv,
            "config": config,
            "seed": seed,
            "jobs": jobs,
            "modules": modules,
            "started_unix": started_unix,
            "status": "running",
            "wall_clock_seconds": null,
            "artifacts": [],
        });
        let m = Self { dir: dir.to_owned(), doc, artifacts: Vec::new(), started: Instant::now() };
        m.flush()?;
        Ok(m)
    }

    /// Writes `contents` to `rel` inside the run directory and records its digest.
    pub fn write(&mut self, rel: &str, contents: &str) -> io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents)?;
        self.artifacts.push((rel.to_owned(), sha256_hex(contents.as_bytes())));
        Ok(())
    }

    pub fn set(&mut self, field: &str, value: Value) {
        self.doc[field] = value;
    }

    pub fn finish(mut self, status: &str) -> io::Result<PathBuf> {
        self.doc["status"] = json!(status);
        self.doc["wall_clock_seconds"] = json!(self.started.elapsed().as_secs_f64());
        self.doc["artifacts"] = Value::Array(self.artifacts.iter().map(|(p, d)| json!({ "path": p, "sha256": d })).collect());
        self.flush()?;
        Ok(self.dir.join(FILE_NAME))
    }

    fn flush(&self) -> io::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.doc).map_err(io::Error::other)?;
        text.push('\n');
        fs::write(self.dir.join(FILE_NAME), text)
    }
}
