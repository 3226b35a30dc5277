use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha1::{Digest, Sha1};

/// Git blob hash of a byte string (`sha1("blob <len>\0" ++ bytes)`).
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(blob_hash(&bytes))
}

/// Record of one command run: what went in, with which settings, and what
/// came out. Contains no timestamps so reruns are byte-identical.
#[derive(Debug)]
pub struct Manifest {
    command: String,
    seed: Option<u64>,
    config: String,
    inputs: Vec<(String, PathBuf)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_owned(),
            seed: None,
            config: "{}".to_owned(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn config<T: Serialize>(mut self, config: &T) -> Self {
        self.config = serde_json::to_string(config).expect("configs serialize");
        self
    }

    pub fn input(mut self, role: &str, path: &Path) -> Self {
        self.inputs.push((role.to_owned(), path.to_owned()));
        self
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_owned());
    }

    pub fn render(&self, out_dir: &Path) -> Result<String> {
        let mut s = String::new();
        let _ = writeln!(s, "command: {}", self.command);
        let _ = writeln!(s, "version: {}", env!("CARGO_PKG_VERSION"));
        match self.seed {
            Some(seed) => writeln!(s, "seed: {seed}")?,
            None => writeln!(s, "seed: none")?,
        }
        let _ = writeln!(s, "config_hash: {}", blob_hash(self.config.as_bytes()));
        let _ = writeln!(s, "config: {}", self.config);
        for (role, path) in &self.inputs {
            let _ = writeln!(s, "input {role}: {} {}", file_hash(path)?, path.display());
        }
        for path in &self.outputs {
            let shown = path.strip_prefix(out_dir).unwrap_or(path);
            let _ = writeln!(s, "output: {} {}", file_hash(path)?, shown.display());
        }
        Ok(s)
    }

    /// Writes `manifest-<command>.txt` into the output directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let name = format!("manifest-{}.txt", self.command.replace(' ', "-"));
        let path = out_dir.join(name);
        fs::write(&path, self.render(out_dir)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
