//! Deterministic message transport between server, reader and tags, with
//! adversarial hooks on every channel and bit/time metering.

mod channel;
mod transcript;
mod world;

pub use channel::{
    apply_action, ChannelName, HexBytes, HookAction, HookContext, HookProgram, HookRule, Rates, Recorder,
};
pub use transcript::{Event, Transcript};
pub use world::{Exchange, SessionResult, SimError, World, WorldConfig, HASH_MS};
