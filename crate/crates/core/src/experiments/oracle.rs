use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::reader::Collected;
use crate::simnet::{SessionResult, SimError, World, WorldConfig, HASH_MS};
use crate::tag::{OutcomeKind, TagId, TagSecrets};
use crate::wire::{Bits, ReaderHello, TagResponse};

/// What the timing oracle reveals about one tag exchange.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedAnswer {
    pub response: Option<TagResponse>,
    /// `'S'` if the tag accepted the reader, `'F'` otherwise.
    pub status: char,
    pub tag_ms: f64,
}

/// The adversary's handle on a world: one method per oracle.
#[derive(Debug, Clone)]
pub struct OracleContext {
    pub world: World,
    corrupted: BTreeSet<TagId>,
}

impl OracleContext {
    pub fn new(config: WorldConfig) -> Result<Self, SimError> {
        Ok(OracleContext { world: World::new(config)?, corrupted: BTreeSet::new() })
    }

    pub fn create_tag(&mut self) -> Result<TagId, SimError> {
        self.world.create_tag()
    }

    /// Reveals the tag's secrets and marks it corrupted for good.
    pub fn corrupt(&mut self, id: TagId) -> Result<TagSecrets, SimError> {
        let secrets = self.world.tag(id)?.secrets();
        self.corrupted.insert(id);
        Ok(secrets)
    }

    pub fn is_corrupted(&self, id: TagId) -> bool {
        self.corrupted.contains(&id)
    }

    pub fn launch(&mut self, ids: &[TagId]) -> Result<Vec<(TagId, ReaderHello)>, SimError> {
        self.world.launch(ids)
    }

    /// Sends a hello of the adversary's choosing to a tag.
    pub fn send_tag(&mut self, id: TagId, hello: &ReaderHello) -> Result<Option<Bits>, SimError> {
        self.world.tag_receive(id, hello)
    }

    /// Sends a response of the adversary's choosing to the reader.
    pub fn send_reader(&mut self, id: TagId, bits: &Bits) -> Result<Collected, SimError> {
        self.world.reader_receive(id, bits)
    }

    /// Closes the open batch and returns what the reader learnt. An empty
    /// batch is reported with no message rather than as an error.
    pub fn ret(&mut self) -> Result<SessionResult, SimError> {
        settle(self.world.finish())
    }

    /// A complete honest run over `ids`.
    pub fn execute(&mut self, ids: &[TagId]) -> Result<SessionResult, SimError> {
        settle(self.world.run_session(ids))
    }

    /// Sends `hello` to a tag and reports success or failure with the
    /// simulated time the tag spent.
    pub fn timing(&mut self, id: TagId, hello: &ReaderHello) -> Result<TimedAnswer, SimError> {
        let rules = self.world.rules;
        let tag = self.world.tags.get_mut(&id).ok_or(SimError::UnknownTag(id))?;
        let out = tag.process(hello, &rules);
        let status = if out.kind == OutcomeKind::Genuine { 'S' } else { 'F' };
        Ok(TimedAnswer { response: Some(out.response), status, tag_ms: out.ops_used as f64 * HASH_MS })
    }
}

fn settle(r: Result<SessionResult, SimError>) -> Result<SessionResult, SimError> {
    match r {
        Err(SimError::EmptyBatch(result)) => Ok(*result),
        other => other,
    }
}
