//! Pinned reference digests. The checked-in file is compared against the
//! live implementation; `regenerate` rewrites it from the live values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crypto::{keyed_hash, Digest, HashAlgorithm, Prng, Word64};

pub const PINNED: &str = include_str!("../golden/keyed_hash.json");

/// Location of the pinned file relative to the workspace root.
pub const GOLDEN_PATH: &str = "crates/core/golden/keyed_hash.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashVector {
    pub name: String,
    pub algorithm: HashAlgorithm,
    #[serde(with = "hex")]
    pub message: Vec<u8>,
    pub key: Word64,
    pub digest: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrngVector {
    pub seed: Word64,
    pub outputs: Vec<Word64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldenFile {
    pub hash: Vec<HashVector>,
    pub prng: Vec<PrngVector>,
}

impl GoldenFile {
    pub fn pinned() -> Result<Self, serde_json::Error> {
        serde_json::from_str(PINNED)
    }

    /// Same inputs as `template`, digests recomputed by this build.
    pub fn recompute(template: &GoldenFile) -> GoldenFile {
        GoldenFile {
            hash: template
                .hash
                .iter()
                .map(|v| HashVector {
                    digest: keyed_hash(v.algorithm, &v.message, v.key).unwrap_or(Digest(0)),
                    ..v.clone()
                })
                .collect(),
            prng: template
                .prng
                .iter()
                .map(|v| {
                    let mut p = Prng::new(v.seed);
                    PrngVector { seed: v.seed, outputs: v.outputs.iter().map(|_| p.next_word()).collect() }
                })
                .collect(),
        }
    }

    /// Names of vectors whose pinned value differs from this build.
    pub fn mismatches(&self) -> Vec<String> {
        let live = GoldenFile::recompute(self);
        let mut bad: Vec<String> =
            self.hash.iter().zip(&live.hash).filter(|(a, b)| a != b).map(|(a, _)| a.name.clone()).collect();
        for (a, b) in self.prng.iter().zip(&live.prng) {
            if a != b {
                bad.push(format!("prng seed {}", a.seed));
            }
        }
        bad
    }

    pub fn to_pretty_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("golden file serializes");
        s.push('\n');
        s
    }
}

/// Rewrites the golden file at `path` with live digests for the pinned
/// inputs and returns the names that changed.
pub fn regenerate(path: &Path) -> std::io::Result<Vec<String>> {
    let pinned = GoldenFile::pinned().map_err(std::io::Error::other)?;
    let changed = pinned.mismatches();
    std::fs::write(path, GoldenFile::recompute(&pinned).to_pretty_json())?;
    Ok(changed)
}
