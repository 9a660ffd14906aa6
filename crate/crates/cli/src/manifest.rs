use std::fs;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Run record written next to every output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub config_sha256: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub threads: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(command_line: Vec<String>, config: &str, seed: u64, inputs: &[&Path], started: Instant) -> Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                let bytes = fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            command_line,
            config_sha256: sha256_hex(config.as_bytes()),
            seed,
            inputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: stsep::current_num_threads(),
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }
}
