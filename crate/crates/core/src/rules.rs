//! Protocol variant selection shared by all entities.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::HashAlgorithm;

/// Scheme 1 is the base protocol; Scheme 2 adds the partial-authentication
/// token `AT` checked by the reader before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    #[default]
    S1,
    S2,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::S1, Scheme::S2];

    pub fn has_token(self) -> bool {
        self == Scheme::S2
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::S1 => "s1",
            Scheme::S2 => "s2",
        })
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Ok(Scheme::S1),
            "s2" | "2" => Ok(Scheme::S2),
            other => Err(format!("unknown scheme {other:?} (expected s1 or s2)")),
        }
    }
}

/// A deliberately broken tag, each breaking exactly one protocol rule.
/// Used to check that the experiment harness can actually detect flaws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMutant {
    /// `H_id` is a per-tag constant.
    StaticId,
    /// The tag never evolves its key.
    NoKeyUpdate,
    /// The decoy path skips one PRNG draw.
    LeakyDecoy,
    /// The tag always sends the first value of its PRNG stream as `R_t`.
    ReusedRt,
    /// The tag skips the `T_r > T_t` freshness check.
    NoTimestampCheck,
}

impl ProtocolMutant {
    pub const ALL: [ProtocolMutant; 5] = [
        ProtocolMutant::StaticId,
        ProtocolMutant::NoKeyUpdate,
        ProtocolMutant::LeakyDecoy,
        ProtocolMutant::ReusedRt,
        ProtocolMutant::NoTimestampCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolMutant::StaticId => "static_id",
            ProtocolMutant::NoKeyUpdate => "no_key_update",
            ProtocolMutant::LeakyDecoy => "leaky_decoy",
            ProtocolMutant::ReusedRt => "reused_rt",
            ProtocolMutant::NoTimestampCheck => "no_timestamp_check",
        }
    }
}

impl fmt::Display for ProtocolMutant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolMutant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.to_ascii_lowercase().replace('-', "_");
        ProtocolMutant::ALL.into_iter().find(|m| m.name() == wanted).ok_or_else(|| format!("unknown mutant {s:?}"))
    }
}

/// Hash backend plus an optional planted flaw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Rules {
    #[serde(default)]
    pub hash: HashAlgorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutant: Option<ProtocolMutant>,
}

impl Rules {
    pub fn with_mutant(mutant: ProtocolMutant) -> Self {
        Rules { mutant: Some(mutant), ..Rules::default() }
    }

    pub fn is(&self, mutant: ProtocolMutant) -> bool {
        self.mutant == Some(mutant)
    }
}
