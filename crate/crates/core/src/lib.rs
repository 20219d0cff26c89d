//! Timestamp-based lightweight mutual authentication for RFID tags with
//! aggregate batch verification at the back-end server.

pub mod cost;
pub mod crypto;
pub mod experiments;
pub mod golden;
pub mod reader;
pub mod rules;
pub mod server;
pub mod simnet;
pub mod tag;
pub mod wire;

pub use crypto::{Digest, HashAlgorithm, Meter, Msg, Prng, Word64};
pub use reader::{ReaderError, ReaderState};
pub use rules::{ProtocolMutant, Rules, Scheme};
pub use server::{setup_server, Database, ServerError};
pub use tag::{TagId, TagState};
