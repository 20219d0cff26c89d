//! Per-session time and link-cost model for one tag and one batch, with a
//! comparison table whose values are measured from a live run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{Msg, WORD_BITS};
use crate::rules::Scheme;
use crate::simnet::{ChannelName, World, WorldConfig, HASH_MS};
use crate::tag::{TagId, TagState};
use crate::wire::{BatchReport, ReaderHello, ServerReply, TagResponse};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Word size in bits.
    pub b: usize,
    pub hash_ms: f64,
    pub rate_t2r: f64,
    pub rate_r2t: f64,
    pub rate_r2s: f64,
    pub ops_s1: u64,
    pub ops_s2: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            b: WORD_BITS,
            hash_ms: HASH_MS,
            rate_t2r: 640_000.0,
            rate_r2t: 126_000.0,
            rate_r2s: 20_000.0,
            ops_s1: TagState::session_ops(Scheme::S1),
            ops_s2: TagState::session_ops(Scheme::S2),
        }
    }
}

impl CostParams {
    pub fn ops(&self, scheme: Scheme) -> u64 {
        match scheme {
            Scheme::S1 => self.ops_s1,
            Scheme::S2 => self.ops_s2,
        }
    }
}

/// Milliseconds per tag session. XOR and concatenation are free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionTime {
    pub tag_compute_ms: f64,
    pub t2r_ms: f64,
    pub r2t_ms: f64,
    pub total_ms: f64,
}

pub fn session_time(scheme: Scheme, params: &CostParams) -> SessionTime {
    let tag_compute_ms = params.ops(scheme) as f64 * params.hash_ms;
    let t2r_ms = TagResponse::bits(scheme) as f64 / params.rate_t2r * 1000.0;
    let r2t_ms = ReaderHello::BITS as f64 / params.rate_r2t * 1000.0;
    SessionTime { tag_compute_ms, t2r_ms, r2t_ms, total_ms: tag_compute_ms + t2r_ms + r2t_ms }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkCost {
    pub bits: usize,
    pub seconds: f64,
}

/// Reader → server load for `n` tags: `(n+1)b` with aggregation, `2nb`
/// when every `H_id` travels next to its `R_t`.
pub fn reader_server_bits(n: usize, aggregated: bool, params: &CostParams) -> Result<LinkCost, CostError> {
    if n == 0 {
        return Err(CostError::EmptyBatch);
    }
    let bits = if aggregated { (n + 1) * params.b } else { 2 * n * params.b };
    Ok(LinkCost { bits, seconds: bits as f64 / params.rate_r2s })
}

/// Fraction of reader → server bits saved by aggregation.
pub fn aggregation_savings(n: usize, params: &CostParams) -> Result<f64, CostError> {
    let agg = reader_server_bits(n, true, params)?.bits as f64;
    let plain = reader_server_bits(n, false, params)?.bits as f64;
    Ok(1.0 - agg / plain)
}

/// One scheme's row of the comparison table. Sizes are in words of `b`
/// bits except where marked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table3Row {
    pub scheme: Scheme,
    pub tag_comp_hash: u64,
    pub message_flows: usize,
    pub tag_memory_bits: usize,
    pub t2r_words: usize,
    pub r2t_words: usize,
    /// Reader → server words is `n + r2s_words_over_n`.
    pub r2s_words_over_n: usize,
    pub s2r_words: usize,
}

impl Table3Row {
    pub fn r2s_formula(&self) -> String {
        format!("(n+{})b", self.r2s_words_over_n)
    }
}

const PROBE_BATCH: u32 = 3;

/// Builds both rows from a live batch session per scheme and checks each
/// value against the codec and the cost parameters.
pub fn table3_rows(params: &CostParams) -> Result<Vec<Table3Row>, CostError> {
    Scheme::ALL.iter().map(|s| measure_row(*s, params)).collect()
}

fn measure_row(scheme: Scheme, params: &CostParams) -> Result<Table3Row, CostError> {
    let fail = |what: String| CostError::InternalConsistency(format!("{scheme}: {what}"));
    let mut world =
        World::new(WorldConfig::new(scheme, PROBE_BATCH, 0x7ab1e3)).map_err(|e| fail(format!("probe world: {e}")))?;
    let result = world.run_all().map_err(|e| fail(format!("probe session: {e}")))?;
    if result.msg != Some(Msg::TagValid) {
        return Err(fail("probe session was rejected".into()));
    }

    let b = params.b;
    let words = |bits: usize| -> Result<usize, CostError> {
        if !bits.is_multiple_of(b) {
            return Err(fail(format!("{bits} bits is not a whole number of words")));
        }
        Ok(bits / b)
    };
    let per_message = |channel: ChannelName| -> Result<usize, CostError> {
        let sizes: Vec<usize> =
            world.transcript.events.iter().filter(|e| e.channel == channel).map(|e| e.bits).collect();
        match sizes.split_first() {
            Some((first, rest)) if rest.iter().all(|s| s == first) => Ok(*first),
            _ => Err(fail(format!("{channel} sizes vary: {sizes:?}"))),
        }
    };

    let t2r = per_message(ChannelName::TagToReader)?;
    if t2r != TagResponse::bits(scheme) {
        return Err(fail(format!("measured T->R {t2r} bits, codec says {}", TagResponse::bits(scheme))));
    }
    let r2t = per_message(ChannelName::ReaderToTag)?;
    let r2s = world.transcript.bits_on(ChannelName::ReaderToServer);
    if r2s != BatchReport::bits_for(PROBE_BATCH as usize) {
        return Err(fail(format!("measured R->S {r2s} bits for n={PROBE_BATCH}")));
    }
    let r2s_words_over_n = words(r2s)? - PROBE_BATCH as usize;
    let agg = reader_server_bits(PROBE_BATCH as usize, true, params)?;
    if agg.bits != r2s {
        return Err(fail(format!("model R->S {} bits, measured {r2s}", agg.bits)));
    }

    let mut ops = result.exchanges.iter().map(|e| e.tag_ops);
    let first = ops.next().unwrap_or_default();
    if ops.any(|o| o != first) || first != params.ops(scheme) {
        return Err(fail(format!("live tag ops {first}, model {}", params.ops(scheme))));
    }
    let memory = world.tag(TagId(0)).map_err(|e| fail(e.to_string()))?.persistent_bits();

    Ok(Table3Row {
        scheme,
        tag_comp_hash: first,
        message_flows: 2,
        tag_memory_bits: memory,
        t2r_words: words(t2r)?,
        r2t_words: words(r2t)?,
        r2s_words_over_n,
        s2r_words: words(ServerReply::accounted_bits(scheme))?,
    })
}

/// Everything the `cost` command prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub scheme: Scheme,
    pub n: usize,
    pub aggregated: bool,
    pub session_time: SessionTime,
    pub reader_server: LinkCost,
    pub reader_server_plain: LinkCost,
    pub savings: f64,
    pub table3: Vec<Table3Row>,
}

pub fn cost_report(scheme: Scheme, n: usize, aggregated: bool, params: &CostParams) -> Result<CostReport, CostError> {
    Ok(CostReport {
        scheme,
        n,
        aggregated,
        session_time: session_time(scheme, params),
        reader_server: reader_server_bits(n, aggregated, params)?,
        reader_server_plain: reader_server_bits(n, false, params)?,
        savings: aggregation_savings(n, params)?,
        table3: table3_rows(params)?,
    })
}
