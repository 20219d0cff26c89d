//! Primitives shared by every protocol entity: 64-bit words, the keyed
//! one-way hash, a counter-mode PRNG built on it, XOR aggregation and the
//! one-time-pad helper.
//!
//! Every protocol field is one [`Word64`]. Concatenation `x ∥ y` is encoded
//! as fixed-width big-endian 8-byte words appended in argument order.

use std::fmt;
use std::ops::BitXor;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

/// Bit length `b` of every protocol field.
pub const WORD_BITS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("keyed hash requires a non-empty message")]
    EmptyMessage,
    #[error("aggregate requires at least one digest")]
    EmptyAggregate,
}

macro_rules! hex_word {
    ($name:ident) => {
        impl $name {
            pub const ZERO: $name = $name(0);

            pub fn to_be_bytes(self) -> [u8; 8] {
                self.0.to_be_bytes()
            }

            pub fn from_be_bytes(bytes: [u8; 8]) -> Self {
                $name(u64::from_be_bytes(bytes))
            }

            pub fn to_hex(self) -> String {
                format!("{:016x}", self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}(0x{:016x})", stringify!($name), self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "0x{:016x}", self.0)
            }
        }

        impl fmt::LowerHex for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                fmt::LowerHex::fmt(&self.0, f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                $name(v)
            }
        }

        impl BitXor for $name {
            type Output = $name;
            fn bitxor(self, rhs: $name) -> $name {
                $name(self.0 ^ rhs.0)
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                let digits = raw.strip_prefix("0x").unwrap_or(&raw);
                if digits.is_empty() || digits.len() > 16 {
                    return Err(serde::de::Error::custom(format!("expected 1..=16 hex digits, got {:?}", raw)));
                }
                u64::from_str_radix(digits, 16).map($name).map_err(serde::de::Error::custom)
            }
        }
    };
}

/// One 64-bit protocol field (key, nonce, timestamp).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word64(pub u64);
hex_word!(Word64);

/// Output of the keyed hash or of the aggregate function.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Digest(pub u64);
hex_word!(Digest);

impl Digest {
    pub fn as_word(self) -> Word64 {
        Word64(self.0)
    }
}

impl Word64 {
    pub fn as_digest(self) -> Digest {
        Digest(self.0)
    }

    /// Index of the most significant set bit, `None` for zero.
    pub fn msb(self) -> Option<u32> {
        (self.0 != 0).then(|| 63 - self.0.leading_zeros())
    }
}

/// Server verdict on a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Msg {
    #[serde(rename = "TAG-VALID")]
    TagValid,
    #[serde(rename = "TAG-AUTH-ERROR")]
    TagAuthError,
}

impl Msg {
    pub fn as_str(self) -> &'static str {
        match self {
            Msg::TagValid => "TAG-VALID",
            Msg::TagAuthError => "TAG-AUTH-ERROR",
        }
    }
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which keyed hash backs the protocol.
///
/// `TestWeak` ignores its key entirely. It exists only so the experiment
/// harness can be checked against a planted flaw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HashAlgorithm {
    /// HMAC-SHA-256 truncated to the leading 64 bits.
    #[default]
    ReferencePrf,
    /// XOR-fold of the message words; key-independent.
    TestWeak,
}

impl HashAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            HashAlgorithm::ReferencePrf => "reference-prf",
            HashAlgorithm::TestWeak => "test-weak",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "reference-prf" => Some(HashAlgorithm::ReferencePrf),
            "test-weak" => Some(HashAlgorithm::TestWeak),
            _ => None,
        }
    }
}

/// `Hash(message, key)`. Unmetered; entities go through [`Meter`].
pub fn keyed_hash(algorithm: HashAlgorithm, message: &[u8], key: Word64) -> Result<Digest, CryptoError> {
    if message.is_empty() {
        return Err(CryptoError::EmptyMessage);
    }
    Ok(match algorithm {
        HashAlgorithm::ReferencePrf => reference_prf(message, key),
        HashAlgorithm::TestWeak => xor_fold(message),
    })
}

/// `Hash(w1 ∥ w2 ∥ …, key)` over big-endian words.
pub fn hash_words(algorithm: HashAlgorithm, words: &[Word64], key: Word64) -> Digest {
    let message = concat(words);
    // words is never empty at call sites; an empty slice is a programming error
    keyed_hash(algorithm, &message, key).expect("hash_words called with no words")
}

/// Fixed-width big-endian concatenation.
pub fn concat(words: &[Word64]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

fn reference_prf(message: &[u8], key: Word64) -> Digest {
    let mut mac =
        <Hmac<Sha256> as KeyInit>::new_from_slice(&key.to_be_bytes()).expect("HMAC accepts keys of any length");
    mac.update(message);
    let tag = mac.finalize().into_bytes();
    let mut head = [0u8; 8];
    head.copy_from_slice(&tag[..8]);
    Digest(u64::from_be_bytes(head))
}

fn xor_fold(message: &[u8]) -> Digest {
    let folded = message.chunks(8).fold(0u64, |acc, chunk| {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        acc ^ u64::from_be_bytes(word)
    });
    Digest(folded)
}

/// Counter-mode generator: the `j`-th output is `Hash(j, seed)` under the
/// reference PRF. The counter is the number of outputs drawn so far.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prng {
    pub seed: Word64,
    pub counter: u64,
}

impl Prng {
    pub fn new(seed: Word64) -> Self {
        Prng { seed, counter: 0 }
    }

    pub fn next_word(&mut self) -> Word64 {
        self.counter += 1;
        self.output_at(self.counter)
    }

    /// The `index`-th output of the stream without advancing it.
    pub fn output_at(&self, index: u64) -> Word64 {
        reference_prf(&index.to_be_bytes(), self.seed).as_word()
    }
}

/// Primitive-operation counter. Every keyed hash and every PRNG draw made
/// through a meter counts as exactly one operation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Meter(pub u64);

impl Meter {
    pub fn count(self) -> u64 {
        self.0
    }

    pub fn reset(&mut self) {
        self.0 = 0;
    }

    pub fn keyed_hash(&mut self, algorithm: HashAlgorithm, message: &[u8], key: Word64) -> Result<Digest, CryptoError> {
        let digest = keyed_hash(algorithm, message, key)?;
        self.0 += 1;
        Ok(digest)
    }

    pub fn hash_words(&mut self, algorithm: HashAlgorithm, words: &[Word64], key: Word64) -> Digest {
        self.0 += 1;
        hash_words(algorithm, words, key)
    }

    pub fn prng_next(&mut self, prng: &mut Prng) -> Word64 {
        self.0 += 1;
        prng.next_word()
    }
}

/// `H = H_1 ⊕ … ⊕ H_n`.
pub fn aggregate(digests: &[Digest]) -> Result<Digest, CryptoError> {
    if digests.is_empty() {
        return Err(CryptoError::EmptyAggregate);
    }
    Ok(digests.iter().fold(Digest::ZERO, |acc, d| acc ^ *d))
}

/// One tag's contribution to a batch: its nonce, the reader nonce of the
/// session and the key the verifier believes it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AggregateEntry {
    pub r_t: Word64,
    pub r_r: Word64,
    pub key: Word64,
}

/// `Hash(R_t ∥ R_r, key)`, the per-tag MAC `H_id`.
pub fn tag_mac(algorithm: HashAlgorithm, entry: &AggregateEntry) -> Digest {
    hash_words(algorithm, &[entry.r_t, entry.r_r], entry.key)
}

/// Recomputes every `H_id`, folds them and compares against `h`.
pub fn verify_aggregate(algorithm: HashAlgorithm, entries: &[AggregateEntry], h: Digest) -> Result<Msg, CryptoError> {
    let digests: Vec<Digest> = entries.iter().map(|e| tag_mac(algorithm, e)).collect();
    let folded = aggregate(&digests)?;
    Ok(if folded == h { Msg::TagValid } else { Msg::TagAuthError })
}

/// One-time pad: `a ⊕ b`.
pub fn xor_pad(a: Word64, b: Word64) -> Word64 {
    a ^ b
}
