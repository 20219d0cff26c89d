//! Built-in adversary strategies. Distinguishers output a guess for the
//! challenger's coin; forgers produce a response for a tag they do not own.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{hash_words, Digest, HashAlgorithm, Word64};
use crate::rules::Scheme;
use crate::simnet::{Exchange, HASH_MS};
use crate::tag::{TagId, TagSecrets};
use crate::wire::{ReaderHello, TagResponse};

/// One session as the adversary sees it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub t_r: Word64,
    /// `None` when the experiment withholds the reader nonce.
    pub r_r: Option<Word64>,
    pub auth_digest: Digest,
    pub response: TagResponse,
    pub tag_ms: f64,
    /// Which tag, when the experiment says so.
    pub label: Option<TagId>,
}

impl SessionView {
    /// View of a tag exchange; `None` if the tag never answered.
    pub fn of(ex: &Exchange) -> Option<Self> {
        Some(SessionView {
            t_r: ex.hello.t_r,
            r_r: Some(ex.hello.r_r),
            auth_digest: ex.hello.auth_digest,
            response: ex.response?,
            tag_ms: ex.tag_ops as f64 * HASH_MS,
            label: None,
        })
    }

    pub fn labelled(mut self, id: TagId) -> Self {
        self.label = Some(id);
        self
    }

    pub fn redacted(mut self) -> Self {
        self.r_r = None;
        self
    }
}

/// Everything handed to a distinguisher in one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub scheme: Scheme,
    pub hash: HashAlgorithm,
    pub history: Vec<SessionView>,
    /// Sessions between corruption and challenge.
    pub refresh: Vec<SessionView>,
    pub challenge: SessionView,
    pub leaked: Option<TagSecrets>,
    /// Tag time of a successful session under the public cost model.
    pub genuine_ms: f64,
}

/// Guesses the challenger's coin; `true` stands for "real", "tag 1" or
/// "success" depending on the game.
pub trait Distinguisher: Send + Sync {
    fn name(&self) -> &'static str;
    fn guess(&self, view: &View) -> bool;
}

/// Rolls a leaked key forward over every visible reader nonce and checks
/// whether any candidate explains the challenge response.
#[derive(Debug, Clone, Copy, Default)]
pub struct KeyChainExtender;

impl Distinguisher for KeyChainExtender {
    fn name(&self) -> &'static str {
        "key-chain-extender"
    }

    fn guess(&self, view: &View) -> bool {
        let Some(leak) = view.leaked else {
            return false;
        };
        let Some(r_r) = view.challenge.r_r else {
            return false;
        };
        let mut candidates = vec![leak.key];
        let mut key = leak.key;
        for s in &view.refresh {
            match s.r_r {
                Some(r) => {
                    key = hash_words(view.hash, &[key], r).as_word();
                    candidates.push(key);
                }
                None => break,
            }
        }
        let resp = &view.challenge.response;
        candidates.iter().any(|k| {
            hash_words(view.hash, &[resp.r_t, r_r], *k) == resp.h_id
                || resp.at.is_some_and(|at| hash_words(view.hash, &[leak.t_max], *k) == at)
        })
    }
}

/// Looks for any response field that repeats between the challenge and
/// the recorded history.
#[derive(Debug, Clone, Copy, Default)]
pub struct LinkabilityCorrelator;

impl Distinguisher for LinkabilityCorrelator {
    fn name(&self) -> &'static str {
        "linkability-correlator"
    }

    fn guess(&self, view: &View) -> bool {
        let c = &view.challenge.response;
        let linked = view.history.iter().find(|s| {
            s.response.h_id == c.h_id || s.response.r_t == c.r_t || (c.at.is_some() && s.response.at == c.at)
        });
        match linked {
            Some(s) => s.label.is_none_or(|l| l == TagId(1)),
            None => false,
        }
    }
}

/// Calls a session successful iff the tag took exactly as long as the
/// cost model says a successful session takes.
#[derive(Debug, Clone, Copy, Default)]
pub struct TimeSplitter;

impl Distinguisher for TimeSplitter {
    fn name(&self) -> &'static str {
        "time-splitter"
    }

    fn guess(&self, view: &View) -> bool {
        view.challenge.tag_ms == view.genuine_ms
    }
}

/// Material available to a forger attacking one tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeView {
    pub scheme: Scheme,
    pub hash: HashAlgorithm,
    pub hello: ReaderHello,
    /// Earlier genuine responses of the target.
    pub recorded: Vec<TagResponse>,
    /// Secrets of some other, corrupted tag.
    pub corrupted: Option<TagSecrets>,
}

pub trait Forger: Send + Sync {
    fn name(&self) -> &'static str;
    fn forge(&self, view: &ForgeView, rng: &mut dyn rand::RngCore) -> TagResponse;
}

fn random_response(scheme: Scheme, rng: &mut dyn rand::RngCore) -> TagResponse {
    TagResponse {
        h_id: Digest(rng.random()),
        r_t: Word64(rng.random()),
        at: scheme.has_token().then(|| Digest(rng.random())),
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TranscriptReplayer;

impl Forger for TranscriptReplayer {
    fn name(&self) -> &'static str {
        "transcript-replayer"
    }

    fn forge(&self, view: &ForgeView, rng: &mut dyn rand::RngCore) -> TagResponse {
        view.recorded.last().copied().unwrap_or_else(|| random_response(view.scheme, rng))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomForger;

impl Forger for RandomForger {
    fn name(&self) -> &'static str {
        "random-forger"
    }

    fn forge(&self, view: &ForgeView, rng: &mut dyn rand::RngCore) -> TagResponse {
        random_response(view.scheme, rng)
    }
}

/// Answers the target's challenge with another tag's stolen secrets.
#[derive(Debug, Clone, Copy, Default)]
pub struct CorruptedKeyForger;

impl Forger for CorruptedKeyForger {
    fn name(&self) -> &'static str {
        "corrupted-key-forger"
    }

    fn forge(&self, view: &ForgeView, rng: &mut dyn rand::RngCore) -> TagResponse {
        let Some(s) = view.corrupted else {
            return random_response(view.scheme, rng);
        };
        let r_t = Word64(rng.random());
        TagResponse {
            h_id: hash_words(view.hash, &[r_t, view.hello.r_r], s.key),
            r_t,
            at: view.scheme.has_token().then(|| hash_words(view.hash, &[s.t_max], s.key)),
        }
    }
}

pub const ADVERSARY_NAMES: [&str; 6] = [
    "key-chain-extender",
    "linkability-correlator",
    "time-splitter",
    "transcript-replayer",
    "random-forger",
    "corrupted-key-forger",
];

pub fn distinguisher(name: &str) -> Option<Box<dyn Distinguisher>> {
    match name {
        "key-chain-extender" => Some(Box::new(KeyChainExtender)),
        "linkability-correlator" => Some(Box::new(LinkabilityCorrelator)),
        "time-splitter" => Some(Box::new(TimeSplitter)),
        _ => None,
    }
}

pub fn forger(name: &str) -> Option<Box<dyn Forger>> {
    match name {
        "transcript-replayer" => Some(Box::new(TranscriptReplayer)),
        "random-forger" => Some(Box::new(RandomForger)),
        "corrupted-key-forger" => Some(Box::new(CorruptedKeyForger)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(challenge: TagResponse, history: Vec<SessionView>) -> View {
        View {
            scheme: Scheme::S1,
            hash: HashAlgorithm::ReferencePrf,
            history,
            refresh: vec![],
            challenge: SessionView {
                t_r: Word64(1),
                r_r: Some(Word64(2)),
                auth_digest: Digest(3),
                response: challenge,
                tag_ms: 1.32,
                label: None,
            },
            leaked: None,
            genuine_ms: 1.32,
        }
    }

    #[test]
    fn extender_recognises_a_key_it_can_derive() {
        let alg = HashAlgorithm::ReferencePrf;
        let k0 = Word64(10);
        let r_refresh = Word64(20);
        let k1 = hash_words(alg, &[k0], r_refresh).as_word();
        let resp = TagResponse { h_id: hash_words(alg, &[Word64(5), Word64(2)], k1), r_t: Word64(5), at: None };
        let mut v = view(resp, vec![]);
        v.leaked = Some(TagSecrets { key: k0, t_max: Word64(99), t_cur: Word64(0) });
        let refresh = SessionView { r_r: Some(r_refresh), ..v.challenge };
        v.refresh = vec![refresh];
        assert!(KeyChainExtender.guess(&v));
        v.refresh = vec![refresh.redacted()];
        assert!(!KeyChainExtender.guess(&v));
    }

    #[test]
    fn correlator_follows_labels() {
        let resp = TagResponse { h_id: Digest(7), r_t: Word64(8), at: None };
        let mut old = view(resp, vec![]).challenge;
        old.response.r_t = Word64(100);
        let v = view(resp, vec![old.labelled(TagId(0))]);
        assert!(!LinkabilityCorrelator.guess(&v));
        let v = view(resp, vec![old.labelled(TagId(1))]);
        assert!(LinkabilityCorrelator.guess(&v));
        let v = view(resp, vec![]);
        assert!(!LinkabilityCorrelator.guess(&v));
    }

    #[test]
    fn registry_covers_every_name() {
        for name in ADVERSARY_NAMES {
            assert!(distinguisher(name).is_some() ^ forger(name).is_some(), "{name}");
        }
    }
}
