//! Tag side of the protocol: reader authentication, `T_max` renewal, the
//! freshness check, response or decoy generation and key evolution.
//!
//! The tag never fails: every input, including garbage bits, produces a
//! response of the same shape using the same number of primitive
//! operations. A rejected reader gets PRNG output instead of MACs.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_words, xor_pad, Digest, Meter, Prng, Word64, WORD_BITS};
use crate::rules::{ProtocolMutant, Rules, Scheme};
use crate::wire::{Bits, ReaderHello, TagResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(pub u32);

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tag:{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("invalid tag snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
    #[error("tag snapshot violates t_prev <= t_cur <= t_max")]
    TimestampOrder,
}

/// Persistent tag memory.
///
/// The protocol itself only needs `key`, `t_cur` and `t_max` (192 bits).
/// `t_prev` lets the tag recognise a hello built on its previous timestamp
/// after the server missed one completed session; `epoch` counts key
/// updates and is simulator bookkeeping only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagState {
    pub id: TagId,
    pub scheme: Scheme,
    pub key: Word64,
    pub t_max: Word64,
    pub t_cur: Word64,
    pub t_prev: Word64,
    pub prng: Prng,
    #[serde(default)]
    pub ops: Meter,
    #[serde(default)]
    pub epoch: u64,
}

/// Why a tag answered with a decoy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoyReason {
    ReaderAuth,
    BadRenewal,
    Stale,
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Genuine,
    /// `T_max` was replaced; the response itself is PRNG output.
    Renewed,
    Decoy(DecoyReason),
}

/// What the tag sent plus simulator-only metadata that never goes on air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagOutcome {
    pub response: TagResponse,
    pub kind: OutcomeKind,
    pub ops_used: u64,
}

impl TagOutcome {
    pub fn genuine(&self) -> bool {
        self.kind == OutcomeKind::Genuine
    }
}

/// Secrets handed out by a corruption oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSecrets {
    pub key: Word64,
    pub t_max: Word64,
    pub t_cur: Word64,
}

impl TagState {
    pub fn new(id: TagId, scheme: Scheme, key: Word64, t_max: Word64, t0: Word64, seed: Word64) -> Self {
        TagState {
            id,
            scheme,
            key,
            t_max,
            t_cur: t0,
            t_prev: t0,
            prng: Prng::new(seed),
            ops: Meter::default(),
            epoch: 0,
        }
    }

    /// Bits of protocol memory: key, last timestamp and threshold.
    pub fn persistent_bits(&self) -> usize {
        [self.key, self.t_cur, self.t_max].len() * WORD_BITS
    }

    /// Primitive operations a single session costs this tag.
    pub fn session_ops(scheme: Scheme) -> u64 {
        match scheme {
            Scheme::S1 => 4,
            Scheme::S2 => 5,
        }
    }

    pub fn secrets(&self) -> TagSecrets {
        TagSecrets { key: self.key, t_max: self.t_max, t_cur: self.t_cur }
    }

    /// Handles one reader hello.
    pub fn process(&mut self, hello: &ReaderHello, rules: &Rules) -> TagOutcome {
        self.ops.reset();
        let alg = rules.hash;

        // Reader authentication. Both slots are evaluated every time and
        // together cost one operation.
        let current = self.ops.hash_words(alg, &[self.t_cur, hello.t_r], self.t_max);
        let previous = hash_words(alg, &[self.t_prev, hello.t_r], self.t_max);
        if hello.auth_digest != current && hello.auth_digest != previous {
            return self.decoy(OutcomeKind::Decoy(DecoyReason::ReaderAuth), rules);
        }

        if hello.t_r > self.t_max {
            let renewed = xor_pad(hello.t_r, self.t_max);
            if renewed > self.t_max {
                self.t_max = renewed;
                return self.decoy(OutcomeKind::Renewed, rules);
            }
            return self.decoy(OutcomeKind::Decoy(DecoyReason::BadRenewal), rules);
        }

        if hello.t_r <= self.t_cur && !rules.is(ProtocolMutant::NoTimestampCheck) {
            return self.decoy(OutcomeKind::Decoy(DecoyReason::Stale), rules);
        }
        self.t_prev = self.t_cur;
        self.t_cur = hello.t_r;

        let r_t = if rules.is(ProtocolMutant::ReusedRt) {
            self.ops.0 += 1;
            self.prng.output_at(1)
        } else {
            self.ops.prng_next(&mut self.prng)
        };
        let h_id = if rules.is(ProtocolMutant::StaticId) {
            self.ops.hash_words(alg, &[self.t_max], self.prng.seed)
        } else {
            self.ops.hash_words(alg, &[r_t, hello.r_r], self.key)
        };
        let at = match self.scheme {
            Scheme::S1 => None,
            Scheme::S2 => Some(self.ops.hash_words(alg, &[self.t_max], self.key)),
        };
        if !rules.is(ProtocolMutant::NoKeyUpdate) {
            self.key = self.ops.hash_words(alg, &[self.key], hello.r_r).as_word();
            self.epoch += 1;
        }

        TagOutcome { response: TagResponse { h_id, r_t, at }, kind: OutcomeKind::Genuine, ops_used: self.ops.count() }
    }

    /// Handles raw bits off the air; undecodable input gets a decoy.
    pub fn process_bits(&mut self, bits: &Bits, rules: &Rules) -> TagOutcome {
        match ReaderHello::decode(bits) {
            Ok(hello) => self.process(&hello, rules),
            Err(_) => {
                self.ops.reset();
                // stands in for the authentication hash
                self.ops.hash_words(rules.hash, &[self.t_cur, Word64::ZERO], self.t_max);
                self.decoy(OutcomeKind::Decoy(DecoyReason::Malformed), rules)
            }
        }
    }

    /// PRNG output for every response field plus one draw in place of the
    /// key update. Key and timestamps are left alone. A static-id tag
    /// still sends its constant.
    fn decoy(&mut self, kind: OutcomeKind, rules: &Rules) -> TagOutcome {
        let r_t = self.ops.prng_next(&mut self.prng);
        let h_id = if rules.is(ProtocolMutant::StaticId) {
            self.ops.hash_words(rules.hash, &[self.t_max], self.prng.seed)
        } else {
            self.ops.prng_next(&mut self.prng).as_digest()
        };
        let at = self.scheme.has_token().then(|| self.ops.prng_next(&mut self.prng).as_digest());
        if !rules.is(ProtocolMutant::LeakyDecoy) {
            let _ = self.ops.prng_next(&mut self.prng);
        }
        TagOutcome { response: TagResponse { h_id, r_t, at }, kind, ops_used: self.ops.count() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tag state serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TagError> {
        let state: TagState = serde_json::from_str(json)?;
        if state.t_prev > state.t_cur || state.t_cur > state.t_max {
            return Err(TagError::TimestampOrder);
        }
        Ok(state)
    }
}

/// `AT = Hash(T_max, k)`.
pub fn auth_token(rules: &Rules, t_max: Word64, key: Word64) -> Digest {
    hash_words(rules.hash, &[t_max], key)
}
