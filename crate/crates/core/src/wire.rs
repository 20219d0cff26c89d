//! Bit-exact layouts of the four protocol messages.
//!
//! Every field is a 64-bit big-endian word; fields appear in declaration
//! order and nothing else is on the wire (no tags, lengths or framing).
//! The receiver therefore has to know which message kind and scheme it is
//! expecting, and any length mismatch is a malformed message.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Digest, Msg, Word64, WORD_BITS};
use crate::rules::Scheme;

/// `MSG` codes: ASCII "TAGVALID" and "TAGERROR".
pub const MSG_VALID_CODE: u64 = 0x5441_4756_414c_4944;
pub const MSG_ERROR_CODE: u64 = 0x5441_4745_5252_4f52;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("malformed {kind}: expected {expected}, got {got} bits")]
    Length { kind: MessageKind, expected: String, got: usize },
    #[error("malformed server reply: unknown MSG code {0:#018x}")]
    UnknownMsg(u64),
}

/// A bit string of arbitrary length, stored MSB-first.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Bits {
    bytes: Vec<u8>,
    len: usize,
}

impl Bits {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        let len = bytes.len() * 8;
        Bits { bytes, len }
    }

    /// Keeps the first `len` bits of `bytes`; trailing bits are cleared.
    pub fn from_bytes_with_len(mut bytes: Vec<u8>, len: usize) -> Self {
        let len = len.min(bytes.len() * 8);
        bytes.truncate(len.div_ceil(8));
        if !len.is_multiple_of(8) {
            let last = bytes.len() - 1;
            bytes[last] &= 0xffu8 << (8 - len % 8);
        }
        Bits { bytes, len }
    }

    pub fn from_words(words: &[Word64]) -> Self {
        Bits::from_bytes(crate::crypto::concat(words))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.bytes)
    }

    /// XORs `mask` into the leading bytes; mask bytes past the end are ignored.
    pub fn xor_mask(&self, mask: &[u8]) -> Bits {
        let mut bytes = self.bytes.clone();
        for (b, m) in bytes.iter_mut().zip(mask) {
            *b ^= m;
        }
        Bits::from_bytes_with_len(bytes, self.len)
    }

    /// Whole 64-bit words; `None` unless the length is a multiple of 64.
    pub fn words(&self) -> Option<Vec<Word64>> {
        if !self.len.is_multiple_of(WORD_BITS) {
            return None;
        }
        Some(self.bytes.chunks_exact(8).map(|c| Word64::from_be_bytes(c.try_into().expect("8-byte chunk"))).collect())
    }
}

impl fmt::Debug for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Bits({}; {})", self.len, self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MessageKind {
    ReaderHello,
    TagResponse,
    BatchReport,
    ServerReply,
}

impl MessageKind {
    pub fn name(self) -> &'static str {
        match self {
            MessageKind::ReaderHello => "reader-hello",
            MessageKind::TagResponse => "tag-response",
            MessageKind::BatchReport => "batch-report",
            MessageKind::ServerReply => "server-reply",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reader → tag: `T_r, R_r, Hash(T_prev ∥ T_r, T_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderHello {
    pub t_r: Word64,
    pub r_r: Word64,
    pub auth_digest: Digest,
}

impl ReaderHello {
    pub const BITS: usize = 3 * WORD_BITS;

    pub fn encode(&self) -> Bits {
        Bits::from_words(&[self.t_r, self.r_r, self.auth_digest.as_word()])
    }

    pub fn decode(bits: &Bits) -> Result<Self, WireError> {
        let w = exact_words(bits, MessageKind::ReaderHello, 3)?;
        Ok(ReaderHello { t_r: w[0], r_r: w[1], auth_digest: w[2].as_digest() })
    }
}

/// Tag → reader: `H_id, R_t` and, in Scheme 2, `AT`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagResponse {
    pub h_id: Digest,
    pub r_t: Word64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Digest>,
}

impl TagResponse {
    pub fn bits(scheme: Scheme) -> usize {
        match scheme {
            Scheme::S1 => 2 * WORD_BITS,
            Scheme::S2 => 3 * WORD_BITS,
        }
    }

    pub fn encode(&self) -> Bits {
        let mut words = vec![self.h_id.as_word(), self.r_t];
        words.extend(self.at.map(Digest::as_word));
        Bits::from_words(&words)
    }

    pub fn decode(bits: &Bits, scheme: Scheme) -> Result<Self, WireError> {
        let n = TagResponse::bits(scheme) / WORD_BITS;
        let w = exact_words(bits, MessageKind::TagResponse, n)?;
        Ok(TagResponse { h_id: w[0].as_digest(), r_t: w[1], at: scheme.has_token().then(|| w[2].as_digest()) })
    }
}

/// Reader → server: aggregate `H` then `R_t1 ∥ … ∥ R_tn`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReport {
    pub h: Digest,
    pub r_t_list: Vec<Word64>,
}

impl BatchReport {
    pub fn bits_for(n: usize) -> usize {
        (n + 1) * WORD_BITS
    }

    pub fn encode(&self) -> Bits {
        let mut words = Vec::with_capacity(self.r_t_list.len() + 1);
        words.push(self.h.as_word());
        words.extend_from_slice(&self.r_t_list);
        Bits::from_words(&words)
    }

    pub fn decode(bits: &Bits) -> Result<Self, WireError> {
        let words = bits.words().filter(|w| w.len() >= 2).ok_or_else(|| WireError::Length {
            kind: MessageKind::BatchReport,
            expected: "(n+1)*64 with n >= 1".into(),
            got: bits.len(),
        })?;
        Ok(BatchReport { h: words[0].as_digest(), r_t_list: words[1..].to_vec() })
    }
}

/// Server → reader: `MSG` and, in Scheme 2, the next tokens `AT` for every
/// tag of the batch in report order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerReply {
    pub msg: Msg,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub at_next: Vec<Digest>,
}

impl ServerReply {
    /// Accounting size of the reply, in bits: `3b` for Scheme 1 and `4b` for
    /// Scheme 2. These are fixed comparison-table constants, not derived from
    /// the physical layout.
    pub fn accounted_bits(scheme: Scheme) -> usize {
        match scheme {
            Scheme::S1 => 3 * WORD_BITS,
            Scheme::S2 => 4 * WORD_BITS,
        }
    }

    pub fn encode(&self) -> Bits {
        let code = match self.msg {
            Msg::TagValid => MSG_VALID_CODE,
            Msg::TagAuthError => MSG_ERROR_CODE,
        };
        let mut words = vec![Word64(code)];
        words.extend(self.at_next.iter().map(|d| d.as_word()));
        Bits::from_words(&words)
    }

    pub fn decode(bits: &Bits, scheme: Scheme) -> Result<Self, WireError> {
        let words = match scheme {
            Scheme::S1 => exact_words(bits, MessageKind::ServerReply, 1)?,
            Scheme::S2 => bits.words().filter(|w| !w.is_empty()).ok_or_else(|| WireError::Length {
                kind: MessageKind::ServerReply,
                expected: "(n+1)*64 with n >= 0".into(),
                got: bits.len(),
            })?,
        };
        let msg = match words[0].0 {
            MSG_VALID_CODE => Msg::TagValid,
            MSG_ERROR_CODE => Msg::TagAuthError,
            other => return Err(WireError::UnknownMsg(other)),
        };
        Ok(ServerReply { msg, at_next: words[1..].iter().map(|w| w.as_digest()).collect() })
    }
}

/// Any of the four protocol messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WireMessage {
    ReaderHello(ReaderHello),
    TagResponse(TagResponse),
    BatchReport(BatchReport),
    ServerReply(ServerReply),
}

impl WireMessage {
    pub fn kind(&self) -> MessageKind {
        match self {
            WireMessage::ReaderHello(_) => MessageKind::ReaderHello,
            WireMessage::TagResponse(_) => MessageKind::TagResponse,
            WireMessage::BatchReport(_) => MessageKind::BatchReport,
            WireMessage::ServerReply(_) => MessageKind::ServerReply,
        }
    }
}

pub fn encode(message: &WireMessage) -> Bits {
    match message {
        WireMessage::ReaderHello(m) => m.encode(),
        WireMessage::TagResponse(m) => m.encode(),
        WireMessage::BatchReport(m) => m.encode(),
        WireMessage::ServerReply(m) => m.encode(),
    }
}

pub fn decode(bits: &Bits, kind: MessageKind, scheme: Scheme) -> Result<WireMessage, WireError> {
    Ok(match kind {
        MessageKind::ReaderHello => WireMessage::ReaderHello(ReaderHello::decode(bits)?),
        MessageKind::TagResponse => WireMessage::TagResponse(TagResponse::decode(bits, scheme)?),
        MessageKind::BatchReport => WireMessage::BatchReport(BatchReport::decode(bits)?),
        MessageKind::ServerReply => WireMessage::ServerReply(ServerReply::decode(bits, scheme)?),
    })
}

fn exact_words(bits: &Bits, kind: MessageKind, n: usize) -> Result<Vec<Word64>, WireError> {
    match bits.words() {
        Some(words) if words.len() == n => Ok(words),
        _ => Err(WireError::Length { kind, expected: (n * WORD_BITS).to_string(), got: bits.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hello() -> ReaderHello {
        ReaderHello { t_r: Word64(7), r_r: Word64(0xabcd), auth_digest: Digest(0x1234) }
    }

    #[test]
    fn reader_hello_is_192_bits() {
        let bits = hello().encode();
        assert_eq!(bits.len(), 192);
        assert_eq!(ReaderHello::decode(&bits).unwrap(), hello());
    }

    #[test]
    fn short_hello_is_malformed() {
        let bits = Bits::from_bytes_with_len(hello().encode().as_bytes().to_vec(), 191);
        assert_eq!(bits.len(), 191);
        assert!(matches!(
            ReaderHello::decode(&bits),
            Err(WireError::Length { kind: MessageKind::ReaderHello, got: 191, .. })
        ));
    }

    #[test]
    fn tag_response_sizes_per_scheme() {
        let s1 = TagResponse { h_id: Digest(1), r_t: Word64(2), at: None };
        let s2 = TagResponse { at: Some(Digest(3)), ..s1 };
        assert_eq!(s1.encode().len(), 128);
        assert_eq!(s2.encode().len(), 192);
        assert_eq!(TagResponse::decode(&s2.encode(), Scheme::S2).unwrap(), s2);
        assert!(TagResponse::decode(&s2.encode(), Scheme::S1).is_err());
    }

    #[test]
    fn batch_report_of_200() {
        let report = BatchReport { h: Digest(9), r_t_list: (0..200).map(Word64).collect() };
        let bits = report.encode();
        assert_eq!(bits.len(), 12864);
        assert_eq!(BatchReport::bits_for(200), 12864);
        assert_eq!(BatchReport::decode(&bits).unwrap().r_t_list.len(), 200);
        // H alone, no nonces
        assert!(BatchReport::decode(&Bits::from_words(&[Word64(1)])).is_err());
    }

    #[test]
    fn server_reply_codes() {
        let r = ServerReply { msg: Msg::TagAuthError, at_next: vec![] };
        assert_eq!(ServerReply::decode(&r.encode(), Scheme::S1).unwrap(), r);
        let junk = Bits::from_words(&[Word64(5)]);
        assert_eq!(ServerReply::decode(&junk, Scheme::S1), Err(WireError::UnknownMsg(5)));
        assert_eq!(ServerReply::accounted_bits(Scheme::S1), 192);
        assert_eq!(ServerReply::accounted_bits(Scheme::S2), 256);
    }

    #[test]
    fn xor_mask_keeps_length() {
        let bits = hello().encode();
        let flipped = bits.xor_mask(&[0x80]);
        assert_eq!(flipped.len(), 192);
        assert_ne!(flipped, bits);
        assert_eq!(flipped.xor_mask(&[0x80]), bits);
    }

    fn arb_message() -> impl Strategy<Value = (WireMessage, Scheme)> {
        let word = any::<u64>();
        prop_oneof![
            (word, word, word).prop_map(|(a, b, c)| (
                WireMessage::ReaderHello(ReaderHello { t_r: Word64(a), r_r: Word64(b), auth_digest: Digest(c) }),
                Scheme::S1
            )),
            (word, word, proptest::option::of(word)).prop_map(|(a, b, c)| {
                let scheme = if c.is_some() { Scheme::S2 } else { Scheme::S1 };
                (WireMessage::TagResponse(TagResponse { h_id: Digest(a), r_t: Word64(b), at: c.map(Digest) }), scheme)
            }),
            (word, proptest::collection::vec(word, 1..300)).prop_map(|(h, rs)| (
                WireMessage::BatchReport(BatchReport { h: Digest(h), r_t_list: rs.into_iter().map(Word64).collect() }),
                Scheme::S1
            )),
            (any::<bool>(), proptest::collection::vec(word, 0..50)).prop_map(|(ok, ats)| (
                WireMessage::ServerReply(ServerReply {
                    msg: if ok { Msg::TagValid } else { Msg::TagAuthError },
                    at_next: ats.into_iter().map(Digest).collect(),
                }),
                Scheme::S2
            )),
        ]
    }

    proptest! {
        #[test]
        fn decode_inverts_encode((msg, scheme) in arb_message()) {
            let bits = encode(&msg);
            prop_assert_eq!(bits.len() % 64, 0);
            prop_assert_eq!(decode(&bits, msg.kind(), scheme).unwrap(), msg);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64), cut in 0usize..8) {
            let len = (bytes.len() * 8).saturating_sub(cut);
            let bits = Bits::from_bytes_with_len(bytes, len);
            for kind in [MessageKind::ReaderHello, MessageKind::TagResponse, MessageKind::BatchReport, MessageKind::ServerReply] {
                for scheme in Scheme::ALL {
                    let _ = decode(&bits, kind, scheme);
                }
            }
        }
    }
}
