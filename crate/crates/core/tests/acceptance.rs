//! Acceptance run: one PASS/FAIL line per criterion at full scale.
//!
//! `cargo test --test acceptance` (add `--release` for speed). The process
//! fails if any criterion fails, except those in `UNATTAINABLE`, whose
//! targets contradict their own inputs and are reported but not enforced.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagchain::cost::{aggregation_savings, reader_server_bits, session_time, table3_rows, CostParams};
use tagchain::crypto::{hash_words, verify_aggregate, AggregateEntry, Msg, Word64};
use tagchain::experiments::{
    measure_desync, run_experiment, ExperimentName, ExperimentParams, ExperimentReport, MIN_TRIALS,
};
use tagchain::server::SECURITY_PARAM;
use tagchain::simnet::{SimError, World, WorldConfig};
use tagchain::tag::{OutcomeKind, TagId, TagState};
use tagchain::wire::{BatchReport, Bits, ReaderHello, TagResponse};
use tagchain::{setup_server, ProtocolMutant, Rules, Scheme};

/// Criteria reported but not enforced.
const UNATTAINABLE: &[&str] = &["cost reproduction"];

type Check = Result<String, String>;
type Criterion = fn() -> Check;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn near(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn cost_reproduction() -> Check {
    let p = CostParams::default();
    let t = session_time(Scheme::S2, &p);
    ensure(near(t.tag_compute_ms, 1.65, 5e-3), || format!("tag compute {} ms", t.tag_compute_ms))?;
    ensure(near(t.t2r_ms, 0.30, 5e-3), || format!("T->R {} ms", t.t2r_ms))?;
    ensure(near(t.r2t_ms, 1.52, 5e-3), || format!("R->T {} ms", t.r2t_ms))?;
    let agg = reader_server_bits(200, true, &p).map_err(|e| e.to_string())?;
    let plain = reader_server_bits(200, false, &p).map_err(|e| e.to_string())?;
    ensure(agg.bits == 12864 && plain.bits == 25600, || format!("bits {} / {}", agg.bits, plain.bits))?;
    ensure(near(agg.seconds, 0.64, 5e-3) && near(plain.seconds, 1.28, 5e-3), || {
        format!("seconds {} / {}", agg.seconds, plain.seconds)
    })?;
    let savings = aggregation_savings(200, &p).map_err(|e| e.to_string())?;
    ensure(near(savings, 0.5, 0.01), || format!("savings {savings}"))?;
    let summary = format!(
        "{:.2} + {:.2} + {:.2} ms; {} / {} bits; {:.2} / {:.2} s; savings {:.1}%",
        t.tag_compute_ms,
        t.t2r_ms,
        t.r2t_ms,
        agg.bits,
        plain.bits,
        agg.seconds,
        plain.seconds,
        savings * 100.0
    );
    ensure(near(t.total_ms, 3.50, 0.01), || {
        format!("{summary}; but total {:.4} ms is {:.4} from 3.50 (tolerance 0.01)", t.total_ms, 3.50 - t.total_ms)
    })?;
    Ok(summary)
}

fn table3_consistency() -> Check {
    let rows = table3_rows(&CostParams::default()).map_err(|e| e.to_string())?;
    let want = [(Scheme::S1, 4, 2), (Scheme::S2, 5, 3)];
    for (scheme, comp, t2r) in want {
        let row = rows.iter().find(|r| r.scheme == scheme).ok_or_else(|| format!("no row for {scheme}"))?;
        ensure(row.tag_comp_hash == comp, || format!("{scheme} tag comp {}", row.tag_comp_hash))?;
        ensure(row.t2r_words == t2r, || format!("{scheme} T->R {}b", row.t2r_words))?;
        ensure(row.r2t_words == 3, || format!("{scheme} R->T {}b", row.r2t_words))?;
        ensure(row.r2s_formula() == "(n+1)b", || format!("{scheme} R->S {}", row.r2s_formula()))?;
        ensure(row.tag_memory_bits == 192, || format!("{scheme} memory {}", row.tag_memory_bits))?;
    }
    // Independent of the table: sizes straight off the codecs.
    let hello = ReaderHello { t_r: Word64(1), r_r: Word64(2), auth_digest: tagchain::Digest(3) };
    ensure(hello.encode().len() == 192, || "hello size".into())?;
    ensure(TagResponse::bits(Scheme::S1) == 128 && TagResponse::bits(Scheme::S2) == 192, || "response size".into())?;
    ensure(BatchReport { h: tagchain::Digest(0), r_t_list: vec![Word64(0); 7] }.encode().len() == 8 * 64, || {
        "report size".into()
    })?;
    Ok("S1 4 hash 2b/3b/(n+1)b 192 bit; S2 5 hash 3b/3b/(n+1)b 192 bit".into())
}

fn honest_completeness() -> Check {
    let mut meta = ChaCha8Rng::seed_from_u64(0xc0_4e7e);
    let mut tags_seen = 0u64;
    for i in 0..100u64 {
        let seed: u64 = meta.random();
        let n = match i {
            0 => 1,
            1 => 64,
            _ => meta.random_range(1..=64),
        };
        for scheme in Scheme::ALL {
            let mut w = World::new(WorldConfig::new(scheme, n, seed)).map_err(|e| e.to_string())?;
            for _ in 0..3 {
                let r = w.run_all().map_err(|e| e.to_string())?;
                ensure(r.msg == Some(Msg::TagValid) && r.marked.len() == n as usize, || {
                    format!("seed {seed:#x} {scheme} n={n}: {:?}, {} marked", r.msg, r.marked.len())
                })?;
                for id in w.ids() {
                    ensure(w.synchronized(id).map_err(|e| e.to_string())?, || {
                        format!("seed {seed:#x} {scheme} n={n}: {id} out of sync")
                    })?;
                }
            }
            tags_seen += n as u64;
        }
    }
    Ok(format!("100 seeds x 2 schemes x 3 sessions, {tags_seen} tags, all TAG-VALID and synchronized"))
}

fn desynchronization() -> Check {
    let mut out = Vec::new();
    for scheme in Scheme::ALL {
        let r = measure_desync(scheme, 1, Rules::default()).map_err(|e| e.to_string())?;
        ensure(r.tuple() == (1, 0, 1, 0) && r.synchronizable, || format!("{scheme}: {:?}", r.tuple()))?;
        out.push(format!("{scheme} {:?}", r.tuple()));
    }
    Ok(format!("{} synchronizable", out.join(", ")))
}

/// A hello of a random kind for `tag`: honest, stale, forged, renewal,
/// bad renewal, or raw noise.
fn random_challenge(tag: &TagState, rules: &Rules, rng: &mut ChaCha8Rng) -> Bits {
    let alg = rules.hash;
    let r_r = Word64(rng.random());
    let fresh = Word64(tag.t_cur.0 + rng.random_range(1..1000));
    let valid = |t_r: Word64| ReaderHello { t_r, r_r, auth_digest: hash_words(alg, &[tag.t_cur, t_r], tag.t_max) };
    match rng.random_range(0..6) {
        0 => valid(fresh).encode(),
        1 => valid(Word64(rng.random_range(0..=tag.t_cur.0))).encode(),
        2 => ReaderHello { auth_digest: tagchain::Digest(rng.random()), ..valid(fresh) }.encode(),
        3 => {
            let bit = tag.t_max.msb().unwrap_or(0) + 1;
            valid(Word64((1 << bit) | rng.random_range(0..1u64 << bit))).encode()
        }
        4 => valid(Word64(tag.t_max.0 + rng.random_range(1..1000))).encode(),
        _ => {
            let len = rng.random_range(0..40);
            Bits::from_bytes((0..len).map(|_| rng.random()).collect())
        }
    }
}

fn timing_indistinguishability() -> Check {
    let rules = Rules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7131);
    let mut kinds = std::collections::BTreeMap::<String, u64>::new();
    for scheme in Scheme::ALL {
        let want = TagState::session_ops(scheme);
        for _ in 0..10_000 {
            let t_cur = Word64(rng.random_range(1..1 << 40));
            let t_max = Word64(t_cur.0 + rng.random_range(1..1 << 40));
            let mut tag = TagState::new(TagId(0), scheme, Word64(rng.random()), t_max, t_cur, Word64(rng.random()));
            let bits = random_challenge(&tag, &rules, &mut rng);
            let out = tag.process_bits(&bits, &rules);
            ensure(out.ops_used == want, || format!("{scheme} {:?} used {} ops, want {want}", out.kind, out.ops_used))?;
            *kinds.entry(format!("{:?}", out.kind)).or_default() += 1;
        }
        let report = run_experiment(ExperimentName::Timing, &ExperimentParams::new(scheme, 10_000, 5))
            .map_err(|e| e.to_string())?;
        ensure(report.advantage == 0.0, || format!("{scheme} timing advantage {}", report.advantage))?;
    }
    ensure(kinds.len() >= 5, || format!("too few paths exercised: {kinds:?}"))?;
    Ok(format!("2 x 10^4 challenges over {} paths, equal op counts; timing advantage 0 for both schemes", kinds.len()))
}

fn run(name: ExperimentName, params: ExperimentParams) -> Result<ExperimentReport, String> {
    run_experiment(name, &params).map_err(|e| format!("{name}: {e}"))
}

fn replay_and_cloning() -> Check {
    for scheme in Scheme::ALL {
        let r = run(ExperimentName::Replay, ExperimentParams::new(scheme, 10_000, 11))?;
        let accepted: u64 = r.detail.iter().filter(|(k, _)| k.ends_with("_accepted")).map(|(_, v)| v).sum();
        ensure(r.wins == 0 && accepted == 0, || format!("{scheme} replay accepted {accepted} times"))?;
        let c = run(ExperimentName::Cloning, ExperimentParams::new(scheme, 100_000, 12))?;
        ensure(c.wins == 0, || format!("{scheme} random forgery won {} of 10^5", c.wins))?;
        let mut active = ExperimentParams::new(scheme, 10_000, 13);
        active.cloning_mode = tagchain::experiments::CloningMode::Active;
        let a = run(ExperimentName::Cloning, active)?;
        ensure(a.wins == 0, || format!("{scheme} corrupted-key forgery won {} of 10^4", a.wins))?;
    }
    Ok("0 of 2 x 2 x 10^4 replays accepted; 0 of 2 x 10^5 random and 2 x 10^4 corrupted-key forgeries won".into())
}

fn distinguishers() -> Check {
    let mut worst: f64 = 0.0;
    for scheme in Scheme::ALL {
        for name in
            [ExperimentName::Forward, ExperimentName::Backward, ExperimentName::Tracking1, ExperimentName::Tracking2]
        {
            let r = run(name, ExperimentParams::new(scheme, 10_000, 21))?;
            ensure(r.advantage < 0.05, || format!("{scheme} {name} real advantage {}", r.advantage))?;
            worst = worst.max(r.advantage);
        }
    }
    let power = [
        (ExperimentName::Tracking1, ProtocolMutant::StaticId, 0.45),
        (ExperimentName::Tracking2, ProtocolMutant::StaticId, 0.45),
        (ExperimentName::Tracking2, ProtocolMutant::ReusedRt, 0.45),
        (ExperimentName::Forward, ProtocolMutant::NoKeyUpdate, 0.4),
        (ExperimentName::Backward, ProtocolMutant::NoKeyUpdate, 0.4),
        (ExperimentName::Timing, ProtocolMutant::LeakyDecoy, 0.49),
    ];
    let mut weakest: f64 = 0.5;
    for scheme in Scheme::ALL {
        for (name, mutant, floor) in power {
            let r = run(name, ExperimentParams::new(scheme, 10_000, 22).with_mutant(mutant))?;
            ensure(r.advantage > floor, || format!("{scheme} {name} {mutant}: {} <= {floor}", r.advantage))?;
            weakest = weakest.min(r.advantage);
        }
        let r = run(
            ExperimentName::Replay,
            ExperimentParams::new(scheme, 10_000, 23).with_mutant(ProtocolMutant::NoTimestampCheck),
        )?;
        ensure(r.wins > 0, || format!("{scheme} replay against no_timestamp_check never won"))?;
    }
    Ok(format!("real advantage <= {worst:.4}; mutants detected with advantage >= {weakest:.4}; stale replay wins"))
}

#[derive(Debug, Clone, Copy)]
enum Corruption {
    None,
    Digest(usize),
    Nonce(usize),
}

/// One batch of `n` tags where tags in `behind` already answered a
/// challenge the server never confirmed. Returns (aggregate decision,
/// per-tag brute-force decision).
fn oracle_case(
    scheme: Scheme,
    n: usize,
    behind: u32,
    corruption: Corruption,
    seed: u64,
) -> Result<(bool, bool), String> {
    let rules = Rules::default();
    let alg = rules.hash;
    let mut db = setup_server(SECURITY_PARAM, Word64(seed), scheme, rules).map_err(|e| e.to_string())?;
    let mut tags = Vec::new();
    for i in 0..n {
        tags.push(db.enroll(TagId(i as u32)).map_err(|e| e.to_string())?);
    }
    for (i, tag) in tags.iter_mut().enumerate() {
        if behind >> i & 1 == 1 {
            let hello = db.issue_challenge(tag.id).map_err(|e| e.to_string())?;
            tag.process(&hello, &rules);
        }
    }
    let mut lanes = Vec::new();
    for tag in &mut tags {
        let hello = db.issue_challenge(tag.id).map_err(|e| e.to_string())?;
        let out = tag.process(&hello, &rules);
        lanes.push((tag.id, hello.r_r, out.response));
    }
    let mut digests: Vec<_> = lanes.iter().map(|l| l.2.h_id).collect();
    let mut reported: Vec<_> = lanes.iter().map(|l| l.2.r_t).collect();
    let mask = 1u64 << (seed % 64) | 1;
    match corruption {
        Corruption::None => {}
        Corruption::Digest(i) => digests[i].0 ^= mask,
        Corruption::Nonce(i) => reported[i].0 ^= mask,
    }
    let session_map: Vec<_> = lanes.iter().map(|l| (l.0, l.2.r_t)).collect();

    // Brute force: every tag on its own, against its stored key or, if a
    // challenge is outstanding, the key one update ahead.
    let mut brute = true;
    for (i, (id, r_r, resp)) in lanes.iter().enumerate() {
        let rec = db.record(*id).map_err(|e| e.to_string())?;
        let mut keys = vec![rec.key];
        if let Some(u) = rec.unconfirmed {
            keys.push(hash_words(alg, &[rec.key], u.r_r).as_word());
        }
        let ok =
            reported[i] == resp.r_t && keys.iter().any(|k| hash_words(alg, &[reported[i], *r_r], *k) == digests[i]);
        brute &= ok;
    }

    let h = tagchain::crypto::aggregate(&digests).map_err(|e| e.to_string())?;
    let report = BatchReport { h, r_t_list: reported.clone() };
    let server = db.clone().verify_batch(&report, &session_map).map_err(|e| e.to_string())?.msg == Msg::TagValid;

    // The plain aggregate check knows only stored keys, so compare it
    // where no tag is behind.
    if behind == 0 {
        let entries: Vec<_> = lanes
            .iter()
            .zip(&reported)
            .map(|((id, r_r, _), r_t)| AggregateEntry {
                r_t: *r_t,
                r_r: *r_r,
                key: db.record(*id).expect("enrolled").key,
            })
            .collect();
        let plain = verify_aggregate(alg, &entries, h).map_err(|e| e.to_string())? == Msg::TagValid;
        ensure(plain == brute, || format!("verify_aggregate {plain} vs brute force {brute}"))?;
    }
    Ok((server, brute))
}

fn oracle_equivalence() -> Check {
    let mut cases = 0u64;
    let mut accepted = 0u64;
    for scheme in Scheme::ALL {
        for n in 1..=8usize {
            let mut patterns = vec![Corruption::None];
            patterns.extend((0..n).map(Corruption::Digest));
            patterns.extend((0..n).map(Corruption::Nonce));
            for behind in 0..1u32 << n {
                for (k, &c) in patterns.iter().enumerate() {
                    let seed = (n as u64) << 40 | (behind as u64) << 8 | k as u64;
                    let (agg, brute) = oracle_case(scheme, n, behind, c, seed)?;
                    ensure(agg == brute, || {
                        format!("{scheme} n={n} behind={behind:#b} {c:?}: aggregate {agg}, brute force {brute}")
                    })?;
                    cases += 1;
                    accepted += agg as u64;
                }
            }
        }
    }
    Ok(format!("{cases} batches (n <= 8, every lag pattern, every single corruption); {accepted} accepted by both"))
}

fn renewal() -> Check {
    let rules = Rules::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4e4e);
    for i in 0..10_000u32 {
        let mut db =
            setup_server(SECURITY_PARAM, Word64(rng.random()), Scheme::S2, rules).map_err(|e| e.to_string())?;
        let t_max = Word64(rng.random_range(db.clock.0 + 1..1 << 63) >> rng.random_range(0..60));
        let t_max = t_max.max(Word64(db.clock.0 + 1));
        let mut tag = db.setup_tag(TagId(i), Word64(rng.random()), t_max).map_err(|e| e.to_string())?;
        let hello = db.issue_renewal(TagId(i)).map_err(|e| e.to_string())?;
        ensure(hello.t_r > t_max && (hello.t_r ^ t_max) > t_max, || format!("t_max {t_max}: T_r {}", hello.t_r))?;
        let out = tag.process(&hello, &rules);
        ensure(out.kind == OutcomeKind::Renewed && tag.t_max == hello.t_r ^ t_max, || {
            format!("t_max {t_max}: {:?}", out.kind)
        })?;
    }

    // Drive a live tag to its threshold, renew, and authenticate again.
    for scheme in Scheme::ALL {
        let mut w = World::new(WorldConfig::new(scheme, 1, 0x4e)).map_err(|e| e.to_string())?;
        let id = TagId(1);
        let clock = w.server.clock;
        let tag = w.server.setup_tag(id, Word64(0xfeed), Word64(clock.0 + 3)).map_err(|e| e.to_string())?;
        w.tags.insert(id, tag);
        let mut sessions = 0;
        loop {
            match w.run_session(&[id]) {
                Ok(r) => {
                    ensure(r.msg == Some(Msg::TagValid), || format!("{scheme} session {sessions}: {:?}", r.msg))?;
                    sessions += 1;
                }
                Err(SimError::Server(tagchain::ServerError::Expired(_))) => break,
                Err(e) => return Err(e.to_string()),
            }
            ensure(sessions <= 3, || "threshold never reached".into())?;
        }
        let kind = w.run_renewal(id).map_err(|e| e.to_string())?;
        ensure(kind == Some(OutcomeKind::Renewed), || format!("{scheme} renewal: {kind:?}"))?;
        let r = w.run_session(&[id]).map_err(|e| e.to_string())?;
        ensure(r.msg == Some(Msg::TagValid) && w.synchronized(id).unwrap_or(false), || {
            format!("{scheme} after renewal: {:?}", r.msg)
        })?;
    }
    Ok("10^4 random thresholds renewed correctly; expired tags recover in the next session for both schemes".into())
}

fn main() -> ExitCode {
    const { assert!(MIN_TRIALS <= 10_000) };
    let criteria: [(&str, Criterion); 9] = [
        ("cost reproduction", cost_reproduction),
        ("comparison table consistency", table3_consistency),
        ("honest completeness", honest_completeness),
        ("desynchronization", desynchronization),
        ("timing indistinguishability", timing_indistinguishability),
        ("replay and cloning", replay_and_cloning),
        ("distinguisher soundness and power", distinguishers),
        ("aggregate oracle equivalence", oracle_equivalence),
        ("renewal", renewal),
    ];
    let mut enforced_failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                let known = UNATTAINABLE.contains(&name);
                if !known {
                    enforced_failures += 1;
                }
                println!("FAIL  {name} ({secs:.1} s): {detail}{}", if known { " [not enforced]" } else { "" });
            }
        }
    }
    if enforced_failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
