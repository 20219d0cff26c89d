use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::channel::ChannelName;
use crate::tag::TagId;
use crate::wire::MessageKind;

/// One message on one channel, as the adversary sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub channel: ChannelName,
    pub bits: usize,
    pub time_ms: f64,
    pub kind: MessageKind,
    pub payload_hex: String,
    pub hook_action: String,
}

impl Event {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn delivered(&self) -> bool {
        self.hook_action != "drop" && !self.hook_action.starts_with("replay-miss")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub events: Vec<Event>,
    /// Primitive operations spent by each tag over the whole run.
    pub op_counts: BTreeMap<TagId, u64>,
}

impl Transcript {
    pub fn push(
        &mut self,
        channel: ChannelName,
        bits: usize,
        time_ms: f64,
        kind: MessageKind,
        payload_hex: String,
        hook_action: String,
    ) -> u64 {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, channel, bits, time_ms, kind, payload_hex, hook_action });
        seq
    }

    pub fn count_ops(&mut self, tag: TagId, ops: u64) {
        *self.op_counts.entry(tag).or_default() += ops;
    }

    pub fn bits_on(&self, channel: ChannelName) -> usize {
        self.events.iter().filter(|e| e.channel == channel).map(|e| e.bits).sum()
    }

    pub fn link_ms(&self) -> f64 {
        self.events.iter().map(|e| e.time_ms).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_json_line());
            out.push('\n');
        }
        out
    }

    /// Parses a JSON-lines export; op counts are not part of it.
    pub fn from_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let events =
            text.lines().filter(|l| !l.trim().is_empty()).map(Event::from_json_line).collect::<Result<_, _>>()?;
        Ok(Transcript { events, op_counts: BTreeMap::new() })
    }
}
