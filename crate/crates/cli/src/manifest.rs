//! Run manifests: one `manifest.json` per output directory.

use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).with_context(|| format!("reading {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Arguments after the subcommand with `--out` and `--threads` removed, so
/// that a replay can choose its own.
pub fn replayable_args(raw: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut it = raw.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--out" || a == "--threads" {
            it.next();
        } else if !(a.starts_with("--out=") || a.starts_with("--threads=")) {
            out.push(a.clone());
        }
    }
    out
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: String,
    pub parameters: Map<String, Value>,
    pub inputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, raw: &[String]) -> Self {
        let args = raw.iter().position(|a| a == command).map_or_else(Vec::new, |i| replayable_args(&raw[i..]));
        Manifest {
            command: command.to_string(),
            args,
            ..Default::default()
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.parameters.insert(key.to_string(), value.into());
    }

    /// Writes the manifest into `out`, digesting every input and every
    /// other file already in `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        let inputs = self
            .inputs
            .iter()
            .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": sha256_file(p)? })))
            .collect::<Result<Vec<_>>>()?;
        let mut names: Vec<String> = std::fs::read_dir(out)
            .with_context(|| format!("listing {}", out.display()))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n != MANIFEST_NAME)
            .collect();
        names.sort();
        let outputs = names
            .iter()
            .map(|n| Ok(json!({ "path": n, "sha256": sha256_file(&out.join(n))? })))
            .collect::<Result<Vec<_>>>()?;
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let v = json!({
            "tool": "pcb",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "config": self.config,
            "parameters": self.parameters,
            "inputs": inputs,
            "outputs": outputs,
            "timestamp": stamp,
        });
        let text = serde_json::to_string_pretty(&v)? + "\n";
        let path = out.join(MANIFEST_NAME);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Command line recorded in a manifest, after checking that its inputs are
/// unchanged.
pub fn replay_command(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let command = v["command"].as_str().context("manifest has no command")?;
    if command == "replay" {
        bail!("manifest records a replay");
    }
    let args = v["args"]
        .as_array()
        .context("manifest has no argument list")?
        .iter()
        .map(|a| a.as_str().map(str::to_string).context("non-string argument"))
        .collect::<Result<Vec<_>>>()?;
    for input in v["inputs"].as_array().into_iter().flatten() {
        let p = Path::new(input["path"].as_str().context("input without path")?);
        let want = input["sha256"].as_str().context("input without digest")?;
        let got = sha256_file(p)?;
        if got != want {
            bail!("input {} changed since the recorded run (sha256 {got}, recorded {want})", p.display());
        }
    }
    let mut cmd = vec!["pcb".to_string(), command.to_string()];
    cmd.extend(args);
    Ok(cmd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_out_and_threads() {
        let raw: Vec<String> = ["simulate", "--frames", "5", "--out", "d", "--threads=2", "--seed", "1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(replayable_args(&raw), ["--frames", "5", "--seed", "1"]);
    }

    #[test]
    fn digest_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
