use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::tag::TagId;
use crate::wire::Bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelName {
    #[serde(rename = "R->T")]
    ReaderToTag,
    #[serde(rename = "T->R")]
    TagToReader,
    #[serde(rename = "R->S")]
    ReaderToServer,
    #[serde(rename = "S->R")]
    ServerToReader,
}

impl ChannelName {
    pub const ALL: [ChannelName; 4] =
        [ChannelName::ReaderToTag, ChannelName::TagToReader, ChannelName::ReaderToServer, ChannelName::ServerToReader];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelName::ReaderToTag => "R->T",
            ChannelName::TagToReader => "T->R",
            ChannelName::ReaderToServer => "R->S",
            ChannelName::ServerToReader => "S->R",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace(['-', '>', '_'], "");
        match norm.as_str() {
            "rt" | "r2t" => Ok(ChannelName::ReaderToTag),
            "tr" | "t2r" => Ok(ChannelName::TagToReader),
            "rs" | "r2s" => Ok(ChannelName::ReaderToServer),
            "sr" | "s2r" => Ok(ChannelName::ServerToReader),
            _ => Err(format!("unknown channel {s:?}")),
        }
    }
}

/// Link rates in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r2t: f64,
    pub t2r: f64,
    pub r2s: f64,
    pub s2r: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { r2t: 126_000.0, t2r: 640_000.0, r2s: 20_000.0, s2r: 20_000.0 }
    }
}

impl Rates {
    pub fn of(&self, channel: ChannelName) -> f64 {
        match channel {
            ChannelName::ReaderToTag => self.r2t,
            ChannelName::TagToReader => self.t2r,
            ChannelName::ReaderToServer => self.r2s,
            ChannelName::ServerToReader => self.s2r,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in ChannelName::ALL {
            let r = self.of(c);
            if !(r.is_finite() && r > 0.0) {
                return Err(format!("rate for {c} must be positive, got {r}"));
            }
        }
        Ok(())
    }

    /// Milliseconds needed to push `bits` through `channel`.
    pub fn transfer_ms(&self, channel: ChannelName, bits: usize) -> f64 {
        bits as f64 / self.of(channel) * 1000.0
    }
}

/// Byte string serialized as hex.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HexBytes(pub Vec<u8>);

impl Serialize for HexBytes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for HexBytes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.trim_start_matches("0x")).map(HexBytes).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HookAction {
    Pass,
    Drop,
    /// Deliver the n-th message previously sent on the same channel.
    Replay(usize),
    /// XOR the payload with a mask.
    Modify(HexBytes),
    /// Deliver these bytes instead.
    Inject(HexBytes),
    /// Pass, flagged as recorded by the adversary.
    Observe,
}

impl HookAction {
    pub fn label(&self) -> String {
        match self {
            HookAction::Pass => "pass".into(),
            HookAction::Drop => "drop".into(),
            HookAction::Replay(i) => format!("replay:{i}"),
            HookAction::Modify(_) => "modify".into(),
            HookAction::Inject(_) => "inject".into(),
            HookAction::Observe => "observe".into(),
        }
    }
}

/// Where a message is in the run, as seen by a hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HookContext {
    pub channel: ChannelName,
    /// Position among all messages ever sent on this channel.
    pub index: u64,
    pub session: u64,
    pub tag: Option<TagId>,
}

/// One interposition rule; unset filters match everything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HookRule {
    pub channel: ChannelName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<TagId>,
    pub action: HookAction,
}

impl HookRule {
    pub fn on(channel: ChannelName, action: HookAction) -> Self {
        HookRule { channel, index: None, session: None, tag: None, action }
    }

    pub fn at_index(mut self, index: u64) -> Self {
        self.index = Some(index);
        self
    }

    pub fn in_session(mut self, session: u64) -> Self {
        self.session = Some(session);
        self
    }

    pub fn for_tag(mut self, tag: TagId) -> Self {
        self.tag = Some(tag);
        self
    }

    fn matches(&self, ctx: &HookContext) -> bool {
        self.channel == ctx.channel
            && self.index.is_none_or(|i| i == ctx.index)
            && self.session.is_none_or(|s| s == ctx.session)
            && self.tag.is_none_or(|t| Some(t) == ctx.tag)
    }
}

/// Adversary program: the first matching rule decides, default is pass.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HookProgram {
    #[serde(default)]
    pub rules: Vec<HookRule>,
}

impl HookProgram {
    pub fn honest() -> Self {
        HookProgram::default()
    }

    pub fn with(mut self, rule: HookRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn action_for(&self, ctx: &HookContext) -> HookAction {
        self.rules.iter().find(|r| r.matches(ctx)).map_or(HookAction::Pass, |r| r.action.clone())
    }

    /// Built-in programs selectable by name.
    pub fn named(name: &str) -> Option<Self> {
        let drop_in_first = |c| Some(HookProgram::honest().with(HookRule::on(c, HookAction::Drop).in_session(1)));
        match name {
            "honest" | "pass" | "none" => Some(HookProgram::honest()),
            "observe" => Some(HookProgram {
                rules: ChannelName::ALL.iter().map(|c| HookRule::on(*c, HookAction::Observe)).collect(),
            }),
            "drop-r2t" => drop_in_first(ChannelName::ReaderToTag),
            "drop-t2r" => drop_in_first(ChannelName::TagToReader),
            "drop-r2s" => drop_in_first(ChannelName::ReaderToServer),
            "drop-s2r" => drop_in_first(ChannelName::ServerToReader),
            "flip-aggregate" => Some(HookProgram::honest().with(
                HookRule::on(ChannelName::ReaderToServer, HookAction::Modify(HexBytes(vec![0x80]))).in_session(1),
            )),
            _ => None,
        }
    }

    pub const NAMES: [&'static str; 8] =
        ["honest", "observe", "drop-r2t", "drop-t2r", "drop-r2s", "drop-s2r", "flip-aggregate", "none"];
}

/// Per-channel message counters and the adversary's recording of every
/// payload as sent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recorder {
    history: [Vec<Bits>; 4],
}

impl Recorder {
    pub fn next_index(&self, channel: ChannelName) -> u64 {
        self.history[channel.slot()].len() as u64
    }

    pub fn record(&mut self, channel: ChannelName, bits: Bits) {
        self.history[channel.slot()].push(bits);
    }

    pub fn get(&self, channel: ChannelName, index: usize) -> Option<&Bits> {
        self.history[channel.slot()].get(index)
    }

    pub fn sent(&self, channel: ChannelName) -> &[Bits] {
        &self.history[channel.slot()]
    }
}

/// Applies `action` to `bits`; `None` means nothing reaches the receiver.
pub fn apply_action(action: &HookAction, bits: &Bits, recorder: &Recorder, channel: ChannelName) -> Option<Bits> {
    match action {
        HookAction::Pass | HookAction::Observe => Some(bits.clone()),
        HookAction::Drop => None,
        HookAction::Replay(i) => recorder.get(channel, *i).cloned(),
        HookAction::Modify(mask) => Some(bits.xor_mask(&mask.0)),
        HookAction::Inject(raw) => Some(Bits::from_bytes(raw.0.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_times_at_default_rates() {
        let r = Rates::default();
        assert!((r.transfer_ms(ChannelName::ReaderToTag, 192) - 1.5238).abs() < 1e-4);
        assert!((r.transfer_ms(ChannelName::TagToReader, 192) - 0.30).abs() < 1e-12);
        assert!((r.transfer_ms(ChannelName::ReaderToServer, 12864) - 643.2).abs() < 1e-9);
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = HookProgram::honest()
            .with(HookRule::on(ChannelName::TagToReader, HookAction::Drop).for_tag(TagId(2)))
            .with(HookRule::on(ChannelName::TagToReader, HookAction::Observe));
        let ctx = |tag| HookContext { channel: ChannelName::TagToReader, index: 0, session: 1, tag: Some(TagId(tag)) };
        assert_eq!(p.action_for(&ctx(2)), HookAction::Drop);
        assert_eq!(p.action_for(&ctx(1)), HookAction::Observe);
        let other = HookContext { channel: ChannelName::ReaderToTag, ..ctx(2) };
        assert_eq!(p.action_for(&other), HookAction::Pass);
    }

    #[test]
    fn programs_roundtrip_through_json() {
        let p = HookProgram::honest()
            .with(HookRule::on(ChannelName::ReaderToServer, HookAction::Modify(HexBytes(vec![1, 2]))).at_index(3))
            .with(HookRule::on(ChannelName::ReaderToTag, HookAction::Replay(0)));
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<HookProgram>(&json).unwrap(), p);
        for name in HookProgram::NAMES {
            assert!(HookProgram::named(name).is_some());
        }
        assert_eq!("t2r".parse::<ChannelName>().unwrap(), ChannelName::TagToReader);
        assert_eq!("R->S".parse::<ChannelName>().unwrap(), ChannelName::ReaderToServer);
    }
}
