//! Run manifest: provenance record tying every emitted data file to the
//! plan, seed, and tool version that produced it.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub plan_path: String,
    /// SHA-256 of the plan file bytes, hex-encoded.
    pub plan_sha256: String,
    pub master_seed: u64,
    pub fidelity: String,
    pub workers: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Every data file this run emitted, relative to the output dir.
    pub outputs: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_round_trips() {
        let m = RunManifest {
            tool_version: "0.1.0".into(),
            plan_path: "plan.txt".into(),
            plan_sha256: sha256_hex(b"x"),
            master_seed: 7,
            fidelity: "quick".into(),
            workers: 2,
            started_unix: 100,
            finished_unix: 200,
            outputs: vec!["results.csv".into()],
        };
        let json = serde_json::to_string(&m).unwrap();
        let back: RunManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.master_seed, 7);
        assert_eq!(back.outputs, m.outputs);
    }
}
