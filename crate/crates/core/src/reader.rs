//! Reader: relays server challenges, filters tag responses and folds the
//! survivors into one batch report.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{aggregate, Msg, Word64};
use crate::rules::Scheme;
use crate::server::{Database, ExpectedTokens, ServerError};
use crate::tag::TagId;
use crate::wire::{BatchReport, Bits, ReaderHello, ServerReply, TagResponse};

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("{0} requested twice in one batch")]
    DuplicateId(TagId),
    #[error("{0} has no pending challenge at this reader")]
    NotPending(TagId),
    #[error("no response survived filtering; nothing to verify")]
    EmptyBatch,
    #[error(transparent)]
    Server(#[from] ServerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExclusionReason {
    /// `R_t` was already seen by this reader.
    DuplicateRt,
    /// Scheme 2 token does not match any expected value.
    AtMismatch,
    /// The response did not decode.
    Malformed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Collected {
    Marked,
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchDecision {
    pub marked: Vec<(TagId, TagResponse)>,
    pub excluded: Vec<(TagId, ExclusionReason)>,
}

/// What goes to the server, plus the pairing of nonces to tags the reader
/// recorded when marking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClosedBatch {
    pub report: BatchReport,
    pub session_map: Vec<(TagId, Word64)>,
    pub excluded: Vec<(TagId, ExclusionReason)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderState {
    pub scheme: Scheme,
    pub seen_r_t: BTreeSet<Word64>,
    #[serde(default)]
    pub at_table: BTreeMap<TagId, ExpectedTokens>,
    #[serde(default)]
    pub pending: BTreeMap<TagId, ReaderHello>,
    #[serde(default)]
    pub decision: BatchDecision,
}

impl ReaderState {
    pub fn new(scheme: Scheme) -> Self {
        ReaderState {
            scheme,
            seen_r_t: BTreeSet::new(),
            at_table: BTreeMap::new(),
            pending: BTreeMap::new(),
            decision: BatchDecision::default(),
        }
    }

    /// Step [1] for every id. Any previous unfinished batch is discarded.
    pub fn open_batch(&mut self, db: &mut Database, ids: &[TagId]) -> Result<Vec<(TagId, ReaderHello)>, ReaderError> {
        let mut distinct = HashSet::with_capacity(ids.len());
        for id in ids {
            if !distinct.insert(*id) {
                return Err(ReaderError::DuplicateId(*id));
            }
            db.record(*id)?;
        }
        self.pending.clear();
        self.decision = BatchDecision::default();
        let mut hellos = Vec::with_capacity(ids.len());
        for id in ids {
            let hello = db.issue_challenge(*id)?;
            if let Some(tokens) = db.expected_tokens(*id)? {
                self.at_table.insert(*id, tokens);
            }
            self.pending.insert(*id, hello);
            hellos.push((*id, hello));
        }
        Ok(hellos)
    }

    /// Step [4.1] for one response.
    pub fn collect(&mut self, id: TagId, resp: &TagResponse) -> Result<Collected, ReaderError> {
        if self.pending.remove(&id).is_none() {
            return Err(ReaderError::NotPending(id));
        }
        let verdict = self.screen(id, resp);
        match verdict {
            Collected::Marked => {
                self.seen_r_t.insert(resp.r_t);
                self.decision.marked.push((id, *resp));
            }
            Collected::Excluded(reason) => {
                log::debug!("excluding {id}: {reason:?}");
                self.decision.excluded.push((id, reason));
            }
        }
        Ok(verdict)
    }

    /// [`ReaderState::collect`] on raw bits.
    pub fn collect_bits(&mut self, id: TagId, bits: &Bits) -> Result<Collected, ReaderError> {
        match TagResponse::decode(bits, self.scheme) {
            Ok(resp) => self.collect(id, &resp),
            Err(_) => {
                if self.pending.remove(&id).is_none() {
                    return Err(ReaderError::NotPending(id));
                }
                self.decision.excluded.push((id, ExclusionReason::Malformed));
                Ok(Collected::Excluded(ExclusionReason::Malformed))
            }
        }
    }

    fn screen(&self, id: TagId, resp: &TagResponse) -> Collected {
        if self.seen_r_t.contains(&resp.r_t) {
            return Collected::Excluded(ExclusionReason::DuplicateRt);
        }
        if self.scheme.has_token() {
            let Some(at) = resp.at else {
                return Collected::Excluded(ExclusionReason::Malformed);
            };
            let expected = self.at_table.get(&id);
            let ok = expected.is_some_and(|e| e.primary == at || e.resync == Some(at));
            if !ok {
                return Collected::Excluded(ExclusionReason::AtMismatch);
            }
        }
        Collected::Marked
    }

    /// Step [4.2]: fold the marked digests, concatenate their nonces.
    /// Unanswered challenges are dropped from the batch.
    pub fn close_batch(&mut self) -> Result<ClosedBatch, ReaderError> {
        self.pending.clear();
        let decision = std::mem::take(&mut self.decision);
        if decision.marked.is_empty() {
            if !decision.excluded.is_empty() {
                log::info!("batch closed with {} exclusions and nothing to verify", decision.excluded.len());
            }
            return Err(ReaderError::EmptyBatch);
        }
        let digests: Vec<_> = decision.marked.iter().map(|(_, r)| r.h_id).collect();
        let h = aggregate(&digests).map_err(|_| ReaderError::EmptyBatch)?;
        let session_map: Vec<_> = decision.marked.iter().map(|(id, r)| (*id, r.r_t)).collect();
        Ok(ClosedBatch {
            report: BatchReport { h, r_t_list: session_map.iter().map(|(_, r)| *r).collect() },
            session_map,
            excluded: decision.excluded,
        })
    }

    /// Step [7]: install next-session tokens after a valid Scheme 2 round.
    pub fn apply_reply(&mut self, session_map: &[(TagId, Word64)], reply: &ServerReply) {
        if !self.scheme.has_token() {
            if !reply.at_next.is_empty() {
                log::warn!("ignoring {} tokens in a scheme 1 reply", reply.at_next.len());
            }
            return;
        }
        if reply.msg != Msg::TagValid {
            return;
        }
        if reply.at_next.len() != session_map.len() {
            log::warn!(
                "reply carries {} tokens for {} tags; keeping the old table",
                reply.at_next.len(),
                session_map.len()
            );
            return;
        }
        for ((id, _), at) in session_map.iter().zip(&reply.at_next) {
            self.at_table.insert(*id, ExpectedTokens { primary: *at, resync: None });
        }
    }
}
