use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::channel::{apply_action, ChannelName, HookAction, HookContext, HookProgram, Rates, Recorder};
use super::transcript::Transcript;
use crate::crypto::{Msg, Word64};
use crate::reader::{ClosedBatch, Collected, ExclusionReason, ReaderError, ReaderState};
use crate::rules::{Rules, Scheme};
use crate::server::{setup_server, Database, ServerError, SECURITY_PARAM};
use crate::tag::{OutcomeKind, TagId, TagState};
use crate::wire::{BatchReport, Bits, MessageKind, ReaderHello, ServerReply, TagResponse};

/// Time of one hash-equivalent tag operation, in milliseconds.
pub const HASH_MS: f64 = 0.33;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world configuration: {0}")]
    Config(String),
    #[error("{0} is not part of this world")]
    UnknownTag(TagId),
    #[error("no response reached verification in session {}", .0.session)]
    EmptyBatch(Box<SessionResult>),
    #[error(transparent)]
    Reader(ReaderError),
    #[error(transparent)]
    Server(#[from] ServerError),
}

impl From<ReaderError> for SimError {
    fn from(e: ReaderError) -> Self {
        match e {
            ReaderError::Server(s) => SimError::Server(s),
            other => SimError::Reader(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub scheme: Scheme,
    pub tags: u32,
    pub seed: u64,
    #[serde(default)]
    pub rules: Rules,
    #[serde(default)]
    pub hooks: HookProgram,
    #[serde(default)]
    pub rates: Rates,
}

impl WorldConfig {
    pub fn new(scheme: Scheme, tags: u32, seed: u64) -> Self {
        WorldConfig {
            scheme,
            tags,
            seed,
            rules: Rules::default(),
            hooks: HookProgram::honest(),
            rates: Rates::default(),
        }
    }

    pub fn with_rules(mut self, rules: Rules) -> Self {
        self.rules = rules;
        self
    }

    pub fn with_hooks(mut self, hooks: HookProgram) -> Self {
        self.hooks = hooks;
        self
    }
}

/// One tag's part of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub id: TagId,
    pub hello: ReaderHello,
    /// What the tag did, if anything reached it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeKind>,
    #[serde(default)]
    pub tag_ops: u64,
    /// Response as the tag sent it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<TagResponse>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collected: Option<Collected>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: u64,
    /// Reply as decoded by the reader; `None` if it never arrived.
    pub msg: Option<Msg>,
    /// Verdict the server actually reached.
    pub server_msg: Option<Msg>,
    pub exchanges: Vec<Exchange>,
    pub marked: Vec<TagId>,
    pub excluded: Vec<(TagId, ExclusionReason)>,
}

impl SessionResult {
    pub fn exchange(&self, id: TagId) -> Option<&Exchange> {
        self.exchanges.iter().find(|e| e.id == id)
    }
}

/// Server, reader, tags and the four channels between them.
#[derive(Debug, Clone)]
pub struct World {
    pub scheme: Scheme,
    pub rules: Rules,
    pub rates: Rates,
    pub hooks: HookProgram,
    pub server: Database,
    pub reader: ReaderState,
    pub tags: BTreeMap<TagId, TagState>,
    pub transcript: Transcript,
    recorder: Recorder,
    session: u64,
    current: SessionResult,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self, SimError> {
        if config.tags == 0 {
            return Err(SimError::Config("a world needs at least one tag".into()));
        }
        config.rates.validate().map_err(SimError::Config)?;
        let server_rules = Rules { hash: config.rules.hash, mutant: None };
        let mut server = setup_server(SECURITY_PARAM, Word64(config.seed), config.scheme, server_rules)?;
        let mut tags = BTreeMap::new();
        for i in 0..config.tags {
            let tag = server.enroll(TagId(i))?;
            tags.insert(tag.id, tag);
        }
        Ok(World {
            scheme: config.scheme,
            rules: config.rules,
            rates: config.rates,
            hooks: config.hooks,
            server,
            reader: ReaderState::new(config.scheme),
            tags,
            transcript: Transcript::default(),
            recorder: Recorder::default(),
            session: 0,
            current: SessionResult::default(),
        })
    }

    /// Enrols one more tag under the next free id.
    pub fn create_tag(&mut self) -> Result<TagId, SimError> {
        let id = TagId(self.tags.keys().next_back().map_or(0, |t| t.0 + 1));
        let tag = self.server.enroll(id)?;
        self.tags.insert(id, tag);
        Ok(id)
    }

    pub fn ids(&self) -> Vec<TagId> {
        self.tags.keys().copied().collect()
    }

    pub fn session(&self) -> u64 {
        self.session
    }

    pub fn tag(&self, id: TagId) -> Result<&TagState, SimError> {
        self.tags.get(&id).ok_or(SimError::UnknownTag(id))
    }

    /// Payloads sent on `channel` so far, before interposition.
    pub fn sent(&self, channel: ChannelName) -> &[Bits] {
        self.recorder.sent(channel)
    }

    /// Tag and server hold the same key.
    pub fn synchronized(&self, id: TagId) -> Result<bool, SimError> {
        Ok(self.tag(id)?.key == self.server.record(id)?.key)
    }

    /// Key updates the tag is ahead of the server (negative if behind).
    pub fn key_lag(&self, id: TagId) -> Result<i64, SimError> {
        Ok(self.tag(id)?.epoch as i64 - self.server.record(id)?.epoch as i64)
    }

    /// Sends `bits` over `channel` through the installed hooks.
    pub fn deliver(&mut self, channel: ChannelName, kind: MessageKind, tag: Option<TagId>, bits: Bits) -> Option<Bits> {
        let ctx = HookContext { channel, index: self.recorder.next_index(channel), session: self.session, tag };
        let action = self.hooks.action_for(&ctx);
        self.recorder.record(channel, bits.clone());
        let delivered = apply_action(&action, &bits, &self.recorder, channel);
        let label = match (&action, &delivered) {
            (HookAction::Replay(i), None) => format!("replay-miss:{i}"),
            _ => action.label(),
        };
        let shown = delivered.as_ref().unwrap_or(&bits);
        let time = self.rates.transfer_ms(channel, shown.len());
        self.transcript.push(channel, shown.len(), time, kind, shown.to_hex(), label);
        delivered
    }

    /// Step [1]: the reader obtains one challenge per tag.
    pub fn launch(&mut self, ids: &[TagId]) -> Result<Vec<(TagId, ReaderHello)>, SimError> {
        for id in ids {
            self.tag(*id)?;
        }
        let hellos = self.reader.open_batch(&mut self.server, ids)?;
        self.session += 1;
        self.current = SessionResult {
            session: self.session,
            exchanges: hellos
                .iter()
                .map(|(id, hello)| Exchange {
                    id: *id,
                    hello: *hello,
                    outcome: None,
                    tag_ops: 0,
                    response: None,
                    collected: None,
                })
                .collect(),
            ..SessionResult::default()
        };
        Ok(hellos)
    }

    /// Steps [1]–[3] on the air for one tag: the hello crosses R→T, the tag
    /// answers, the answer crosses T→R. Returns what reaches the reader.
    pub fn tag_receive(&mut self, id: TagId, hello: &ReaderHello) -> Result<Option<Bits>, SimError> {
        self.tag(id)?;
        let Some(arrived) = self.deliver(ChannelName::ReaderToTag, MessageKind::ReaderHello, Some(id), hello.encode())
        else {
            return Ok(None);
        };
        let rules = self.rules;
        let tag = self.tags.get_mut(&id).expect("checked above");
        let outcome = tag.process_bits(&arrived, &rules);
        self.transcript.count_ops(id, outcome.ops_used);
        if let Some(ex) = self.current.exchanges.iter_mut().find(|e| e.id == id) {
            ex.outcome = Some(outcome.kind);
            ex.tag_ops = outcome.ops_used;
            ex.response = Some(outcome.response);
        }
        Ok(self.deliver(ChannelName::TagToReader, MessageKind::TagResponse, Some(id), outcome.response.encode()))
    }

    /// Step [4.1] for bits that reached the reader.
    pub fn reader_receive(&mut self, id: TagId, bits: &Bits) -> Result<Collected, SimError> {
        let got = self.reader.collect_bits(id, bits)?;
        if let Some(ex) = self.current.exchanges.iter_mut().find(|e| e.id == id) {
            ex.collected = Some(got);
        }
        Ok(got)
    }

    /// Steps [4.2]–[7]: aggregate, verify at the server, deliver the reply.
    pub fn finish(&mut self) -> Result<SessionResult, SimError> {
        let closed = match self.reader.close_batch() {
            Ok(c) => c,
            Err(ReaderError::EmptyBatch) => {
                let mut result = std::mem::take(&mut self.current);
                result.excluded = excluded_from(&result);
                return Err(SimError::EmptyBatch(Box::new(result)));
            }
            Err(e) => return Err(e.into()),
        };
        let ClosedBatch { report, session_map, excluded } = closed;
        self.current.marked = session_map.iter().map(|(id, _)| *id).collect();
        self.current.excluded = excluded;

        if let Some(bits) = self.deliver(ChannelName::ReaderToServer, MessageKind::BatchReport, None, report.encode()) {
            let reply = self.server_verify(&bits, &session_map)?;
            self.current.server_msg = Some(reply.msg);
            if let Some(back) =
                self.deliver(ChannelName::ServerToReader, MessageKind::ServerReply, None, reply.encode())
            {
                match ServerReply::decode(&back, self.scheme) {
                    Ok(reply) => {
                        self.reader.apply_reply(&session_map, &reply);
                        self.current.msg = Some(reply.msg);
                    }
                    Err(e) => log::debug!("reader could not decode reply: {e}"),
                }
            }
        }
        Ok(std::mem::take(&mut self.current))
    }

    fn server_verify(&mut self, bits: &Bits, session_map: &[(TagId, Word64)]) -> Result<ServerReply, SimError> {
        let reject = ServerReply { msg: Msg::TagAuthError, at_next: Vec::new() };
        let Ok(report) = BatchReport::decode(bits) else {
            return Ok(reject);
        };
        match self.server.verify_batch(&report, session_map) {
            Ok(reply) => Ok(reply),
            Err(ServerError::Misaligned { .. }) => Ok(reject),
            Err(e) => Err(e.into()),
        }
    }

    /// One complete protocol run over `ids` in order.
    pub fn run_session(&mut self, ids: &[TagId]) -> Result<SessionResult, SimError> {
        let hellos = self.launch(ids)?;
        for (id, hello) in hellos {
            if let Some(bits) = self.tag_receive(id, &hello)? {
                self.reader_receive(id, &bits)?;
            }
        }
        self.finish()
    }

    /// Runs a session over every tag of the world.
    pub fn run_all(&mut self) -> Result<SessionResult, SimError> {
        let ids = self.ids();
        self.run_session(&ids)
    }

    /// A renewal hello for `id`; the tag's decoy-shaped answer is relayed
    /// and discarded by the reader. Returns what the tag did.
    pub fn run_renewal(&mut self, id: TagId) -> Result<Option<OutcomeKind>, SimError> {
        self.tag(id)?;
        let hello = self.server.issue_renewal(id)?;
        self.session += 1;
        let Some(arrived) = self.deliver(ChannelName::ReaderToTag, MessageKind::ReaderHello, Some(id), hello.encode())
        else {
            return Ok(None);
        };
        let rules = self.rules;
        let tag = self.tags.get_mut(&id).expect("checked above");
        let outcome = tag.process_bits(&arrived, &rules);
        self.transcript.count_ops(id, outcome.ops_used);
        self.deliver(ChannelName::TagToReader, MessageKind::TagResponse, Some(id), outcome.response.encode());
        Ok(Some(outcome.kind))
    }
}

fn excluded_from(result: &SessionResult) -> Vec<(TagId, ExclusionReason)> {
    result
        .exchanges
        .iter()
        .filter_map(|e| match e.collected {
            Some(Collected::Excluded(r)) => Some((e.id, r)),
            _ => None,
        })
        .collect()
}
