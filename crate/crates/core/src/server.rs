//! Back-end database: tag enrolment, challenge and renewal issuance, and
//! batch verification with one-step key resynchronisation.
//!
//! A tag that completed a session whose response never reached the server
//! is one key ahead. The server remembers the reader nonce of the last
//! issuance it never saw confirmed, so it can derive the tag's key as the
//! ephemeral candidate `Ek = Hash(k, R_r_unconfirmed)`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_words, Digest, Msg, Prng, Word64};
use crate::rules::{Rules, Scheme};
use crate::tag::{auth_token, TagId, TagState};
use crate::wire::{BatchReport, ReaderHello, ServerReply};

/// The only supported security parameter: the word width.
pub const SECURITY_PARAM: u32 = 64;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("unsupported security parameter {0} (only 64 is supported)")]
    UnsupportedParameter(u32),
    #[error("{0} is already enrolled")]
    DuplicateTag(TagId),
    #[error("{0} is not enrolled")]
    UnknownTag(TagId),
    #[error("t_max {t_max} is not ahead of the clock {clock}")]
    ThresholdBehindClock { t_max: Word64, clock: Word64 },
    #[error("{0} has reached its t_max; issue a renewal first")]
    Expired(TagId),
    #[error("t_max of {0} cannot be renewed inside 64 bits")]
    RenewalExhausted(TagId),
    #[error("session map has {map} entries but the report carries {report} nonces")]
    Misaligned { map: usize, report: usize },
    #[error("{0} appears twice in one batch")]
    DuplicateInBatch(TagId),
    #[error("{0} has no outstanding challenge")]
    NoChallenge(TagId),
    #[error("invalid database snapshot: {0}")]
    Snapshot(#[from] serde_json::Error),
    #[error("database snapshot is inconsistent: {0}")]
    Inconsistent(String),
}

/// One challenge handed to the reader.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issuance {
    pub t_r: Word64,
    pub r_r: Word64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerRecord {
    pub id: TagId,
    pub key: Word64,
    pub t_max: Word64,
    /// Renewed threshold awaiting confirmation by a successful session.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max_pending: Option<Word64>,
    pub t_confirmed: Word64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issued: Option<Issuance>,
    /// Last issuance superseded before it was confirmed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unconfirmed: Option<Issuance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at_expected: Option<Digest>,
    #[serde(default)]
    pub epoch: u64,
}

impl ServerRecord {
    /// Threshold the tag is expected to hold right now.
    pub fn effective_t_max(&self) -> Word64 {
        self.t_max_pending.unwrap_or(self.t_max)
    }

    fn ephemeral_key(&self, rules: &Rules) -> Option<Word64> {
        self.unconfirmed.map(|u| hash_words(rules.hash, &[self.key], u.r_r).as_word())
    }
}

/// Tokens the reader may accept from a tag in Scheme 2: the one for the
/// stored key and, while an issuance is unconfirmed, the one for `Ek`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedTokens {
    pub primary: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resync: Option<Digest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Database {
    pub scheme: Scheme,
    #[serde(default)]
    pub rules: Rules,
    /// Shared initial timestamp `T_0`.
    pub t0: Word64,
    pub clock: Word64,
    pub rng: Prng,
    pub records: BTreeMap<TagId, ServerRecord>,
}

/// Creates an empty database with a seeded clock and master randomness.
pub fn setup_server(security_param: u32, seed: Word64, scheme: Scheme, rules: Rules) -> Result<Database, ServerError> {
    if security_param != SECURITY_PARAM {
        return Err(ServerError::UnsupportedParameter(security_param));
    }
    let mut rng = Prng::new(seed);
    let t0 = Word64((rng.next_word().0 >> 60) + 1);
    Ok(Database { scheme, rules, t0, clock: t0, rng, records: BTreeMap::new() })
}

impl Database {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: TagId) -> Result<&ServerRecord, ServerError> {
        self.records.get(&id).ok_or(ServerError::UnknownTag(id))
    }

    fn record_mut(&mut self, id: TagId) -> Result<&mut ServerRecord, ServerError> {
        self.records.get_mut(&id).ok_or(ServerError::UnknownTag(id))
    }

    fn token(&self, t_max: Word64, key: Word64) -> Option<Digest> {
        self.scheme.has_token().then(|| auth_token(&self.rules, t_max, key))
    }

    /// Registers tag `id` with key `key` and threshold `t_max` and returns
    /// the matching tag memory.
    pub fn setup_tag(&mut self, id: TagId, key: Word64, t_max: Word64) -> Result<TagState, ServerError> {
        if self.records.contains_key(&id) {
            return Err(ServerError::DuplicateTag(id));
        }
        if t_max <= self.clock {
            return Err(ServerError::ThresholdBehindClock { t_max, clock: self.clock });
        }
        let seed = self.rng.next_word();
        let record = ServerRecord {
            id,
            key,
            t_max,
            t_max_pending: None,
            t_confirmed: self.t0,
            issued: None,
            unconfirmed: None,
            at_expected: self.token(t_max, key),
            epoch: 0,
        };
        self.records.insert(id, record);
        Ok(TagState::new(id, self.scheme, key, t_max, self.t0, seed))
    }

    /// [`Database::setup_tag`] with a fresh random key and a threshold far
    /// ahead of the clock.
    pub fn enroll(&mut self, id: TagId) -> Result<TagState, ServerError> {
        let key = self.rng.next_word();
        let t_max = Word64(self.clock.0 + (1 << 40) + (self.rng.next_word().0 >> 32));
        self.setup_tag(id, key, t_max)
    }

    /// Step [1] material for tag `id`: next timestamp, a fresh reader nonce
    /// and `Hash(T_confirmed ∥ T_r, T_max)`.
    pub fn issue_challenge(&mut self, id: TagId) -> Result<ReaderHello, ServerError> {
        let next = Word64(self.clock.0 + 1);
        let rec = self.record(id)?;
        if next > rec.effective_t_max() {
            return Err(ServerError::Expired(id));
        }
        let (t_confirmed, t_max) = (rec.t_confirmed, rec.effective_t_max());
        self.clock = next;
        let r_r = self.rng.next_word();
        let auth_digest = hash_words(self.rules.hash, &[t_confirmed, next], t_max);
        let rec = self.record_mut(id)?;
        if let Some(prev) = rec.issued.take() {
            rec.unconfirmed = Some(prev);
        }
        rec.issued = Some(Issuance { t_r: next, r_r });
        Ok(ReaderHello { t_r: next, r_r, auth_digest })
    }

    /// Renewal hello: `T_r = T_max_new ⊕ T_max` where `T_max_new` has its
    /// top bit strictly above both the old threshold and the clock.
    pub fn issue_renewal(&mut self, id: TagId) -> Result<ReaderHello, ServerError> {
        let rec = self.record(id)?;
        let old = rec.t_max;
        let t_confirmed = rec.t_confirmed;
        let floor = old.max(Word64(self.clock.0 + 1));
        let bit = floor.msb().map_or(0, |b| b + 1);
        if bit > 63 {
            return Err(ServerError::RenewalExhausted(id));
        }
        let below = (1u64 << bit) - 1;
        let new = Word64((1u64 << bit) | old.0 | (self.rng.next_word().0 & below));
        let t_r = new ^ old;
        let r_r = self.rng.next_word();
        let auth_digest = hash_words(self.rules.hash, &[t_confirmed, t_r], old);
        let at = self.token(new, self.record(id)?.key);
        let rec = self.record_mut(id)?;
        rec.t_max_pending = Some(new);
        rec.at_expected = at;
        Ok(ReaderHello { t_r, r_r, auth_digest })
    }

    /// Tokens the reader should accept from `id` in its next response.
    pub fn expected_tokens(&self, id: TagId) -> Result<Option<ExpectedTokens>, ServerError> {
        let rec = self.record(id)?;
        if !self.scheme.has_token() {
            return Ok(None);
        }
        let t_max = rec.effective_t_max();
        Ok(Some(ExpectedTokens {
            primary: auth_token(&self.rules, t_max, rec.key),
            resync: rec.ephemeral_key(&self.rules).map(|ek| auth_token(&self.rules, t_max, ek)),
        }))
    }

    /// Forces a server-side key update without the tag, as the
    /// desynchronisation experiments require.
    pub fn force_update(&mut self, id: TagId, r_r: Word64) -> Result<(), ServerError> {
        let rules = self.rules;
        let scheme = self.scheme;
        let rec = self.record_mut(id)?;
        rec.key = hash_words(rules.hash, &[rec.key], r_r).as_word();
        rec.epoch += 1;
        rec.at_expected = scheme.has_token().then(|| auth_token(&rules, rec.effective_t_max(), rec.key));
        Ok(())
    }

    /// Steps [6]–[7]. All-or-nothing: on `TAG-AUTH-ERROR` the database is
    /// untouched.
    pub fn verify_batch(
        &mut self,
        report: &BatchReport,
        session_map: &[(TagId, Word64)],
    ) -> Result<ServerReply, ServerError> {
        if session_map.len() != report.r_t_list.len() {
            return Err(ServerError::Misaligned { map: session_map.len(), report: report.r_t_list.len() });
        }
        let mut seen = HashSet::with_capacity(session_map.len());
        for (id, _) in session_map {
            if !seen.insert(*id) {
                return Err(ServerError::DuplicateInBatch(*id));
            }
        }

        let alg = self.rules.hash;
        let mut lanes = Vec::with_capacity(session_map.len());
        for ((id, r_t), reported) in session_map.iter().zip(&report.r_t_list) {
            let rec = self.record(*id)?;
            let issued = rec.issued.ok_or(ServerError::NoChallenge(*id))?;
            if reported != r_t {
                return Ok(reject());
            }
            let stored = hash_words(alg, &[*r_t, issued.r_r], rec.key);
            let ephemeral = rec.ephemeral_key(&self.rules).map(|ek| (ek, hash_words(alg, &[*r_t, issued.r_r], ek)));
            lanes.push(Lane { id: *id, issued, stored, ephemeral });
        }
        if lanes.is_empty() {
            return Ok(reject());
        }

        let Some(use_ephemeral) = choose_candidates(&lanes, report.h) else {
            return Ok(reject());
        };

        let mut at_next = Vec::new();
        for (lane, ephemeral) in lanes.iter().zip(use_ephemeral) {
            let rules = self.rules;
            let scheme = self.scheme;
            let rec = self.record_mut(lane.id)?;
            let (chosen, steps) = match (ephemeral, lane.ephemeral) {
                (true, Some((ek, _))) => (ek, 2),
                _ => (rec.key, 1),
            };
            rec.key = hash_words(rules.hash, &[chosen], lane.issued.r_r).as_word();
            rec.epoch += steps;
            rec.t_confirmed = lane.issued.t_r;
            rec.issued = None;
            rec.unconfirmed = None;
            if let Some(t_max) = rec.t_max_pending.take() {
                rec.t_max = t_max;
            }
            if scheme.has_token() {
                let at = auth_token(&rules, rec.t_max, rec.key);
                rec.at_expected = Some(at);
                at_next.push(at);
            }
        }
        Ok(ServerReply { msg: Msg::TagValid, at_next })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("database serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ServerError> {
        let db: Database = serde_json::from_str(json)?;
        for (id, rec) in &db.records {
            if rec.id != *id {
                return Err(ServerError::Inconsistent(format!("record for {} stored under {}", rec.id, id)));
            }
            if let Some(issued) = rec.issued {
                if issued.t_r <= rec.t_confirmed {
                    return Err(ServerError::Inconsistent(format!("{id}: issued timestamp not after confirmed")));
                }
                if issued.t_r > db.clock {
                    return Err(ServerError::Inconsistent(format!("{id}: issued timestamp ahead of clock")));
                }
            }
        }
        Ok(db)
    }
}

fn reject() -> ServerReply {
    ServerReply { msg: Msg::TagAuthError, at_next: Vec::new() }
}

struct Lane {
    id: TagId,
    issued: Issuance,
    stored: Digest,
    ephemeral: Option<(Word64, Digest)>,
}

/// Picks, for every lane, the stored key or the ephemeral key so that the
/// folded MACs equal `h`. Stored keys are tried first. Otherwise the lanes
/// whose candidate flips are needed form the unique subset whose digest
/// differences XOR to the residue; no subset, or more than one, rejects.
fn choose_candidates(lanes: &[Lane], h: Digest) -> Option<Vec<bool>> {
    let residue = lanes.iter().fold(h.0, |acc, lane| acc ^ lane.stored.0);
    let mut choice = vec![false; lanes.len()];
    if residue == 0 {
        return Some(choice);
    }

    let flippable: Vec<usize> = (0..lanes.len()).filter(|&i| lanes[i].ephemeral.is_some()).collect();
    let words = flippable.len().div_ceil(64).max(1);
    // basis[bit] = (vector with leading bit `bit`, lanes combined into it)
    let mut basis: Vec<Option<(u64, Vec<u64>)>> = vec![None; 64];
    let mut dependent = false;
    for (slot, &lane) in flippable.iter().enumerate() {
        let (_, d1) = lanes[lane].ephemeral.expect("flippable lane has a candidate");
        let mut v = lanes[lane].stored.0 ^ d1.0;
        let mut combo = vec![0u64; words];
        combo[slot / 64] |= 1 << (slot % 64);
        while v != 0 {
            let top = 63 - v.leading_zeros() as usize;
            match &basis[top] {
                Some((bv, bc)) => {
                    v ^= bv;
                    combo.iter_mut().zip(bc).for_each(|(a, b)| *a ^= b);
                }
                None => {
                    basis[top] = Some((v, combo));
                    break;
                }
            }
        }
        if v == 0 {
            dependent = true;
        }
    }

    let mut v = residue;
    let mut combo = vec![0u64; words];
    while v != 0 {
        let top = 63 - v.leading_zeros() as usize;
        let (bv, bc) = basis[top].as_ref()?;
        v ^= bv;
        combo.iter_mut().zip(bc).for_each(|(a, b)| *a ^= b);
    }
    if dependent {
        return None;
    }
    for (slot, &lane) in flippable.iter().enumerate() {
        choice[lane] = combo[slot / 64] >> (slot % 64) & 1 == 1;
    }
    Some(choice)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::aggregate;

    fn db(scheme: Scheme) -> Database {
        setup_server(64, Word64(42), scheme, Rules::default()).unwrap()
    }

    fn run(db: &mut Database, tags: &mut [TagState], rules: &Rules) -> ServerReply {
        let mut map = Vec::new();
        let mut digests = Vec::new();
        for t in tags.iter_mut() {
            let hello = db.issue_challenge(t.id).unwrap();
            let out = t.process(&hello, rules);
            assert!(out.genuine());
            map.push((t.id, out.response.r_t));
            digests.push(out.response.h_id);
        }
        let report = BatchReport { h: aggregate(&digests).unwrap(), r_t_list: map.iter().map(|m| m.1).collect() };
        db.verify_batch(&report, &map).unwrap()
    }

    #[test]
    fn setup_server_contract() {
        let a = db(Scheme::S1);
        assert!(a.is_empty());
        assert_eq!(a, db(Scheme::S1));
        assert!(matches!(
            setup_server(128, Word64(1), Scheme::S1, Rules::default()),
            Err(ServerError::UnsupportedParameter(128))
        ));
    }

    #[test]
    fn setup_tag_shares_initial_timestamp() {
        let mut d = db(Scheme::S1);
        let tag = d.setup_tag(TagId(1), Word64(5), Word64(1 << 20)).unwrap();
        assert_eq!(tag.t_cur, d.t0);
        assert_eq!(d.record(TagId(1)).unwrap().t_confirmed, d.t0);
        assert!(matches!(d.setup_tag(TagId(1), Word64(5), Word64(1 << 20)), Err(ServerError::DuplicateTag(_))));
        assert!(matches!(d.setup_tag(TagId(2), Word64(5), d.clock), Err(ServerError::ThresholdBehindClock { .. })));
    }

    #[test]
    fn scheme_two_bootstrap_token_matches_first_session() {
        let mut d = db(Scheme::S2);
        let mut tag = d.enroll(TagId(3)).unwrap();
        let boot = d.record(TagId(3)).unwrap().at_expected.unwrap();
        let hello = d.issue_challenge(TagId(3)).unwrap();
        let out = tag.process(&hello, &Rules::default());
        assert_eq!(out.response.at, Some(boot));
    }

    #[test]
    fn challenges_move_forward_with_fresh_nonces() {
        let mut d = db(Scheme::S1);
        d.enroll(TagId(1)).unwrap();
        let mut nonces = HashSet::new();
        let mut last = d.record(TagId(1)).unwrap().t_confirmed;
        for _ in 0..1000 {
            let h = d.issue_challenge(TagId(1)).unwrap();
            assert!(h.t_r > last);
            last = h.t_r;
            assert!(nonces.insert(h.r_r));
        }
        assert!(matches!(d.issue_challenge(TagId(9)), Err(ServerError::UnknownTag(_))));
    }

    #[test]
    fn honest_batch_of_five_advances_all_keys() {
        let rules = Rules::default();
        let mut d = db(Scheme::S1);
        let mut tags: Vec<_> = (0..5).map(|i| d.enroll(TagId(i)).unwrap()).collect();
        assert_eq!(run(&mut d, &mut tags, &rules).msg, Msg::TagValid);
        for t in &tags {
            let rec = d.record(t.id).unwrap();
            assert_eq!(rec.key, t.key);
            assert_eq!(rec.t_confirmed, t.t_cur);
            assert_eq!(rec.epoch, 1);
        }
    }

    #[test]
    fn poisoned_batch_changes_nothing() {
        let rules = Rules::default();
        let mut d = db(Scheme::S2);
        let mut tags: Vec<_> = (0..5).map(|i| d.enroll(TagId(i)).unwrap()).collect();
        let mut map = Vec::new();
        let mut digests = Vec::new();
        for t in tags.iter_mut() {
            let out = t.process(&d.issue_challenge(t.id).unwrap(), &rules);
            map.push((t.id, out.response.r_t));
            digests.push(out.response.h_id);
        }
        digests[2] = Digest(0x1234_5678);
        let before = d.clone();
        let report = BatchReport { h: aggregate(&digests).unwrap(), r_t_list: map.iter().map(|m| m.1).collect() };
        let reply = d.verify_batch(&report, &map).unwrap();
        assert_eq!(reply.msg, Msg::TagAuthError);
        assert!(reply.at_next.is_empty());
        assert_eq!(d, before);
    }

    #[test]
    fn tag_one_step_ahead_is_resynchronised() {
        let rules = Rules::default();
        let mut d = db(Scheme::S1);
        let mut tags: Vec<_> = (0..3).map(|i| d.enroll(TagId(i)).unwrap()).collect();
        // tag 1 completes a session whose response is lost
        let hello = d.issue_challenge(TagId(1)).unwrap();
        assert!(tags[1].process(&hello, &rules).genuine());
        assert_eq!(run(&mut d, &mut tags, &rules).msg, Msg::TagValid);
        for t in &tags {
            assert_eq!(d.record(t.id).unwrap().key, t.key);
            assert_eq!(d.record(t.id).unwrap().epoch, t.epoch);
        }
    }

    #[test]
    fn tag_two_steps_ahead_is_rejected() {
        let rules = Rules::default();
        let mut d = db(Scheme::S1);
        let mut tag = d.enroll(TagId(0)).unwrap();
        for _ in 0..2 {
            let hello = d.issue_challenge(TagId(0)).unwrap();
            assert!(tag.process(&hello, &rules).genuine());
        }
        let hello = d.issue_challenge(TagId(0)).unwrap();
        let out = tag.process(&hello, &rules);
        assert!(!out.genuine());
        let report = BatchReport { h: out.response.h_id, r_t_list: vec![out.response.r_t] };
        let reply = d.verify_batch(&report, &[(TagId(0), out.response.r_t)]).unwrap();
        assert_eq!(reply.msg, Msg::TagAuthError);
    }

    #[test]
    fn renewal_arithmetic_and_recovery() {
        let rules = Rules::default();
        let mut d = db(Scheme::S2);
        let mut tag = d.setup_tag(TagId(0), Word64(77), Word64(0x00ff)).unwrap();
        assert!(d.clock.0 < 0x80);
        let hello = d.issue_renewal(TagId(0)).unwrap();
        assert_eq!(hello.t_r, Word64(0x0100));
        assert_eq!(d.record(TagId(0)).unwrap().t_max_pending, Some(Word64(0x01ff)));
        assert_eq!(tag.process(&hello, &rules).kind, crate::tag::OutcomeKind::Renewed);
        assert_eq!(tag.t_max, Word64(0x01ff));
        let mut tags = vec![tag];
        let reply = run(&mut d, &mut tags, &rules);
        assert_eq!(reply.msg, Msg::TagValid);
        let rec = d.record(TagId(0)).unwrap();
        assert_eq!(rec.t_max, Word64(0x01ff));
        assert_eq!(rec.t_max_pending, None);
        assert_eq!(reply.at_next, vec![auth_token(&rules, Word64(0x01ff), tags[0].key)]);
    }

    #[test]
    fn renewal_space_exhausted() {
        let mut d = db(Scheme::S1);
        d.setup_tag(TagId(0), Word64(1), Word64(1 << 63)).unwrap();
        assert!(matches!(d.issue_renewal(TagId(0)), Err(ServerError::RenewalExhausted(_))));
    }

    #[test]
    fn expired_tag_needs_renewal() {
        let mut d = db(Scheme::S1);
        let t_max = Word64(d.clock.0 + 2);
        d.setup_tag(TagId(0), Word64(1), t_max).unwrap();
        d.issue_challenge(TagId(0)).unwrap();
        d.issue_challenge(TagId(0)).unwrap();
        assert!(matches!(d.issue_challenge(TagId(0)), Err(ServerError::Expired(_))));
    }

    #[test]
    fn usage_errors() {
        let mut d = db(Scheme::S1);
        d.enroll(TagId(0)).unwrap();
        let report = BatchReport { h: Digest(1), r_t_list: vec![Word64(1)] };
        assert!(matches!(d.verify_batch(&report, &[]), Err(ServerError::Misaligned { .. })));
        assert!(matches!(d.verify_batch(&report, &[(TagId(5), Word64(1))]), Err(ServerError::UnknownTag(_))));
        assert!(matches!(d.verify_batch(&report, &[(TagId(0), Word64(1))]), Err(ServerError::NoChallenge(_))));
        let two = BatchReport { h: Digest(1), r_t_list: vec![Word64(1), Word64(2)] };
        assert!(matches!(
            d.verify_batch(&two, &[(TagId(0), Word64(1)), (TagId(0), Word64(2))]),
            Err(ServerError::DuplicateInBatch(_))
        ));
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut d = db(Scheme::S2);
        d.enroll(TagId(0)).unwrap();
        d.enroll(TagId(7)).unwrap();
        d.issue_challenge(TagId(7)).unwrap();
        let restored = Database::from_json(&d.to_json()).unwrap();
        assert_eq!(restored, d);
        let broken = d.to_json().replace("\"clock\":", "\"clock_\":");
        assert!(Database::from_json(&broken).is_err());
    }
}
