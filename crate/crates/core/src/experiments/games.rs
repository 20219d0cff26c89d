use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adversary::{distinguisher, forger, Distinguisher, ForgeView, SessionView, View};
use super::oracle::OracleContext;
use super::{check_trials, finish_report, run_trials, ExperimentError, ExperimentName, ExperimentParams, Tally};
use crate::crypto::{Digest, Msg, Word64};
use crate::reader::Collected;
use crate::rules::{Rules, Scheme};
use crate::simnet::{ChannelName, HookAction, HookProgram, HookRule, SessionResult, SimError, WorldConfig, HASH_MS};
use crate::tag::{OutcomeKind, TagId, TagState};
use crate::wire::TagResponse;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackingVariant {
    /// Which of two known tags answered?
    Exp1,
    /// Is this the tag's real next answer or random?
    Exp2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloningMode {
    /// The adversary may corrupt tags other than the target.
    Active,
    #[default]
    Passive,
}

const A: TagId = TagId(0);
const B: TagId = TagId(1);

fn config(params: &ExperimentParams, tags: u32, rng: &mut ChaCha8Rng) -> WorldConfig {
    WorldConfig::new(params.scheme, tags, rng.random()).with_rules(Rules { mutant: params.mutant, ..Rules::default() })
}

fn view_of(result: &SessionResult, id: TagId) -> Result<SessionView, ExperimentError> {
    result.exchange(id).and_then(SessionView::of).ok_or(ExperimentError::Sim(SimError::UnknownTag(id)))
}

fn genuine_ms(scheme: Scheme) -> f64 {
    TagState::session_ops(scheme) as f64 * HASH_MS
}

/// Replaces the key-dependent fields, and with `all` also `R_t`, by
/// uniform values.
fn randomize(resp: TagResponse, all: bool, rng: &mut ChaCha8Rng) -> TagResponse {
    TagResponse {
        h_id: Digest(rng.random()),
        r_t: if all { Word64(rng.random()) } else { resp.r_t },
        at: resp.at.map(|_| Digest(rng.random())),
    }
}

fn pick_distinguisher(
    experiment: ExperimentName,
    params: &ExperimentParams,
) -> Result<Box<dyn Distinguisher>, ExperimentError> {
    let name = params.adversary.as_deref().unwrap_or(experiment.default_adversary());
    distinguisher(name).ok_or_else(|| ExperimentError::WrongAdversary { experiment, adversary: name.to_string() })
}

fn base_view(params: &ExperimentParams, challenge: SessionView) -> View {
    View {
        scheme: params.scheme,
        hash: Rules::default().hash,
        history: Vec::new(),
        refresh: Vec::new(),
        challenge,
        leaked: None,
        genuine_ms: genuine_ms(params.scheme),
    }
}

/// The adversary records a session, then learns the tag's current key and
/// must tell that session's real response from a random one.
pub fn run_forward_security(params: &ExperimentParams) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let adv = pick_distinguisher(ExperimentName::Forward, params)?;
    let tally = run_trials(params.trials, params.seed, |rng| {
        let mut ctx = OracleContext::new(config(params, 1, rng))?;
        let history = view_of(&ctx.execute(&[A])?, A)?;
        let mut challenge = view_of(&ctx.execute(&[A])?, A)?;
        let leaked = ctx.corrupt(A)?;
        let b = rng.random_bool(0.5);
        if !b {
            challenge.response = randomize(challenge.response, false, rng);
        }
        let view = View { history: vec![history], leaked: Some(leaked), ..base_view(params, challenge) };
        Ok(Tally::guess(b, adv.guess(&view)))
    })?;
    Ok(finish_report(ExperimentName::Forward, params, adv.name(), tally, Vec::new()))
}

/// The adversary holds an old key and misses the reader nonce of one
/// refresh session; it must tell the next real response from a random one.
pub fn run_backward_security(params: &ExperimentParams) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let adv = pick_distinguisher(ExperimentName::Backward, params)?;
    let tally = run_trials(params.trials, params.seed, |rng| {
        let mut ctx = OracleContext::new(config(params, 1, rng))?;
        let history = view_of(&ctx.execute(&[A])?, A)?;
        let leaked = ctx.corrupt(A)?;
        let mut refresh = view_of(&ctx.execute(&[A])?, A)?;
        if !params.lift_restriction {
            refresh = refresh.redacted();
        }
        let mut challenge = view_of(&ctx.execute(&[A])?, A)?;
        let b = rng.random_bool(0.5);
        if !b {
            challenge.response = randomize(challenge.response, false, rng);
        }
        let view = View {
            history: vec![history],
            refresh: vec![refresh],
            leaked: Some(leaked),
            ..base_view(params, challenge)
        };
        Ok(Tally::guess(b, adv.guess(&view)))
    })?;
    Ok(finish_report(ExperimentName::Backward, params, adv.name(), tally, Vec::new()))
}

pub fn run_tracking(
    variant: TrackingVariant,
    params: &ExperimentParams,
) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let name = match variant {
        TrackingVariant::Exp1 => ExperimentName::Tracking1,
        TrackingVariant::Exp2 => ExperimentName::Tracking2,
    };
    let adv = pick_distinguisher(name, params)?;
    let tally = run_trials(params.trials, params.seed, |rng| match variant {
        TrackingVariant::Exp1 => {
            let mut ctx = OracleContext::new(config(params, 2, rng))?;
            let mut history = Vec::new();
            for _ in 0..2 {
                let r = ctx.execute(&[A, B])?;
                history.push(view_of(&r, A)?.labelled(A));
                history.push(view_of(&r, B)?.labelled(B));
            }
            let b = rng.random_bool(0.5);
            let target = if b { B } else { A };
            let challenge = view_of(&ctx.execute(&[target])?, target)?;
            let view = View { history, ..base_view(params, challenge) };
            Ok(Tally::guess(b, adv.guess(&view)))
        }
        TrackingVariant::Exp2 => {
            let mut ctx = OracleContext::new(config(params, 1, rng))?;
            let history = vec![view_of(&ctx.execute(&[A])?, A)?, view_of(&ctx.execute(&[A])?, A)?];
            let mut challenge = view_of(&ctx.execute(&[A])?, A)?;
            let b = rng.random_bool(0.5);
            if !b {
                challenge.response = randomize(challenge.response, true, rng);
            }
            let view = View { history, ..base_view(params, challenge) };
            Ok(Tally::guess(b, adv.guess(&view)))
        }
    })?;
    Ok(finish_report(name, params, adv.name(), tally, Vec::new()))
}

/// Coin 1: an honest session. Coin 0: the hello's digest is corrupted so
/// the tag rejects the reader. The adversary sees the tag's answer and
/// its simulated compute time.
pub fn run_timing(params: &ExperimentParams) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let adv = pick_distinguisher(ExperimentName::Timing, params)?;
    let tally = run_trials(params.trials, params.seed, |rng| {
        let mut ctx = OracleContext::new(config(params, 1, rng))?;
        let history = view_of(&ctx.execute(&[A])?, A)?;
        let b = rng.random_bool(0.5);
        let result = if b {
            ctx.execute(&[A])?
        } else {
            let (_, mut hello) = ctx.launch(&[A])?[0];
            hello.auth_digest = Digest(hello.auth_digest.0 ^ rng.random_range(1..=u64::MAX));
            if let Some(bits) = ctx.send_tag(A, &hello)? {
                ctx.send_reader(A, &bits)?;
            }
            ctx.ret()?
        };
        let challenge = view_of(&result, A)?;
        let view = View { history: vec![history], ..base_view(params, challenge) };
        Ok(Tally::guess(b, adv.guess(&view)))
    })?;
    Ok(finish_report(ExperimentName::Timing, params, adv.name(), tally, Vec::new()))
}

/// The forger answers a fresh challenge for tag B, which it never
/// corrupts; in active mode it holds tag A's secrets. It wins if the
/// server accepts a batch containing B.
pub fn run_cloning(params: &ExperimentParams) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let default = match params.cloning_mode {
        CloningMode::Active => "corrupted-key-forger",
        CloningMode::Passive => "random-forger",
    };
    let name = params.adversary.as_deref().unwrap_or(default);
    let f = forger(name).ok_or_else(|| ExperimentError::WrongAdversary {
        experiment: ExperimentName::Cloning,
        adversary: name.to_string(),
    })?;
    let tally = run_trials(params.trials, params.seed, |rng| {
        let mut ctx = OracleContext::new(config(params, 2, rng))?;
        let seen = ctx.execute(&[A, B])?;
        let recorded = seen.exchange(B).and_then(|e| e.response).into_iter().collect();
        let corrupted = match params.cloning_mode {
            CloningMode::Active => Some(ctx.corrupt(A)?),
            CloningMode::Passive => None,
        };
        let (_, hello) = ctx.launch(&[B])?[0];
        let view = ForgeView { scheme: params.scheme, hash: Rules::default().hash, hello, recorded, corrupted };
        let forged = f.forge(&view, rng);
        ctx.send_reader(B, &forged.encode())?;
        let result = ctx.ret()?;
        Ok(Tally::outcome(result.msg == Some(Msg::TagValid) && result.marked.contains(&B)))
    })?;
    let mut report = finish_report(ExperimentName::Cloning, params, f.name(), tally, Vec::new());
    report.detail.push((format!("{:?}", params.cloning_mode).to_lowercase(), tally.attempts));
    Ok(report)
}

/// After one recorded session, the adversary replays the recorded tag
/// response to the reader, and separately the recorded hello to the tag.
/// A replayed response wins if the reader marks it; a replayed hello wins
/// if the tag accepts it.
pub fn run_replay(params: &ExperimentParams) -> Result<super::ExperimentReport, ExperimentError> {
    check_trials(params.trials)?;
    let tally = run_trials(params.trials, params.seed, |rng| {
        let mut ctx = OracleContext::new(config(params, 1, rng))?;
        ctx.execute(&[A])?;
        let replay_on = |channel| HookProgram::honest().with(HookRule::on(channel, HookAction::Replay(0)).at_index(1));

        let mut w = ctx.clone();
        w.world.hooks = replay_on(ChannelName::TagToReader);
        let r = w.execute(&[A])?;
        let response_won = r.exchange(A).and_then(|e| e.collected) == Some(Collected::Marked);

        let mut w = ctx;
        w.world.hooks = replay_on(ChannelName::ReaderToTag);
        let r = w.execute(&[A])?;
        let hello_won = r.exchange(A).and_then(|e| e.outcome) == Some(OutcomeKind::Genuine);

        Ok(Tally {
            wins: response_won as u64 + hello_won as u64,
            attempts: 2,
            extra: [response_won as u64, hello_won as u64],
            ..Tally::default()
        })
    })?;
    let detail = vec![
        ("response_replays".to_string(), params.trials),
        ("response_replays_accepted".to_string(), tally.extra[0]),
        ("hello_replays".to_string(), params.trials),
        ("hello_replays_accepted".to_string(), tally.extra[1]),
    ];
    Ok(finish_report(ExperimentName::Replay, params, "transcript-replayer", tally, detail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::ProtocolMutant;

    #[test]
    fn too_few_trials_is_an_error() {
        let p = ExperimentParams::new(Scheme::S1, 0, 1);
        assert!(matches!(run_forward_security(&p), Err(ExperimentError::TooFewTrials(0))));
    }

    #[test]
    fn wrong_adversary_is_rejected() {
        let p = ExperimentParams::new(Scheme::S1, 100, 1).with_adversary("random-forger");
        assert!(matches!(run_timing(&p), Err(ExperimentError::WrongAdversary { .. })));
    }

    #[test]
    fn small_runs_separate_real_from_mutant() {
        let p = ExperimentParams::new(Scheme::S1, 200, 3);
        assert!(run_timing(&p).unwrap().passed());
        let m = run_timing(&p.clone().with_mutant(ProtocolMutant::LeakyDecoy)).unwrap();
        assert!(m.passed() && m.advantage > 0.45, "{m:?}");
    }
}
