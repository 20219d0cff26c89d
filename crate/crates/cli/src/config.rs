use std::path::{Path, PathBuf};

use serde::Deserialize;
use tagchain::simnet::HookProgram;
use tagchain::{ProtocolMutant, Scheme};

use crate::CliError;

/// Optional TOML file; keys mirror the command-line flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scheme: Option<Scheme>,
    pub tags: Option<u32>,
    pub sessions: Option<u32>,
    pub seed: Option<SeedValue>,
    pub hooks: Option<String>,
    pub output: Option<PathBuf>,
    pub mutant: Option<ProtocolMutant>,
    pub trials: Option<u64>,
    pub adversary: Option<String>,
}

/// TOML integers are signed, so large seeds may be given as strings.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedValue {
    Int(i64),
    Text(String),
}

impl SeedValue {
    fn resolve(&self) -> Result<u64, CliError> {
        match self {
            SeedValue::Int(i) => u64::try_from(*i).map_err(|_| CliError::Usage(format!("seed {i} is negative"))),
            SeedValue::Text(s) => parse_seed(s).map_err(CliError::Usage),
        }
    }
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    pub fn seed(&self) -> Result<Option<u64>, CliError> {
        self.seed.as_ref().map(SeedValue::resolve).transpose()
    }
}

/// Decimal or `0x`-prefixed hexadecimal.
pub fn parse_seed(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let parsed = match t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => t.parse(),
    };
    parsed.map_err(|_| format!("invalid seed {s:?}"))
}

/// A hook program by built-in name or from a JSON file.
pub fn load_hooks(spec: &str) -> Result<HookProgram, CliError> {
    if let Some(p) = HookProgram::named(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "unknown hook program {spec:?}; use one of {} or a JSON file",
            HookProgram::NAMES.join(", ")
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read hooks {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid hooks {}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub tags: u32,
    pub sessions: u32,
    pub seed: u64,
    pub hooks_name: String,
    pub hooks: HookProgram,
    pub output: Option<PathBuf>,
    pub mutant: Option<ProtocolMutant>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.tags == 0 {
            return Err(CliError::Usage("--tags must be at least 1".into()));
        }
        if self.sessions == 0 {
            return Err(CliError::Usage("--sessions must be at least 1".into()));
        }
        Ok(())
    }
}
