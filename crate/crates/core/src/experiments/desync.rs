use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::crypto::{Digest, Msg, Word64};
use crate::rules::{Rules, Scheme};
use crate::simnet::{
    ChannelName, HexBytes, HookAction, HookProgram, HookRule, SessionResult, SimError, World, WorldConfig,
};
use crate::tag::TagId;
use crate::wire::ReaderHello;

const ID: TagId = TagId(0);
const MAX_ROUNDS: u64 = 8;

/// One blocking or injection attempt and its effect on key agreement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Probe {
    pub attack: String,
    /// Key updates the tag ends up ahead of the server (negative: behind).
    pub lag: i64,
    /// The next honest session was accepted.
    pub recovered: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesyncReport {
    pub scheme: Scheme,
    pub desync_s: u64,
    pub desync_t: u64,
    pub resync_s: u64,
    pub resync_t: u64,
    pub synchronizable: bool,
    pub probes: Vec<Probe>,
}

impl DesyncReport {
    pub fn tuple(&self) -> (u64, u64, u64, u64) {
        (self.desync_s, self.desync_t, self.resync_s, self.resync_t)
    }
}

fn settle(r: Result<SessionResult, SimError>) -> Result<SessionResult, SimError> {
    match r {
        Err(SimError::EmptyBatch(result)) => Ok(*result),
        other => other,
    }
}

fn accepted(world: &mut World) -> Result<bool, SimError> {
    world.hooks = HookProgram::honest();
    Ok(settle(world.run_session(&[ID]))?.server_msg == Some(Msg::TagValid))
}

/// Hooks that fire only in the world's next session.
fn next_session(world: &World, channel: ChannelName, action: HookAction) -> HookProgram {
    HookProgram::honest().with(HookRule::on(channel, action).in_session(world.session() + 1))
}

/// Desynchronisation and resynchronisation values for one tag.
///
/// Desync values come from single-message attacks on a synchronised
/// world: dropping each of the four flows, replaying the previous hello or
/// report, and injecting a forged hello or report. Resync values come from
/// the counter loop: round `Ct` forces `Ct` one-sided key updates and then
/// runs one honest session; the first rejected round `Ct` yields `Ct − 1`.
/// A tag-side update is a session whose response is blocked; a
/// server-side update is applied to the database directly.
pub fn measure_desync(scheme: Scheme, seed: u64, rules: Rules) -> Result<DesyncReport, ExperimentError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = World::new(WorldConfig::new(scheme, 1, seed).with_rules(rules))?;
    settle(base.run_session(&[ID]))?;

    let mut probes = Vec::new();
    let mut probe = |attack: String, mut w: World, act: &mut dyn FnMut(&mut World) -> Result<(), SimError>| {
        act(&mut w)?;
        let lag = w.key_lag(ID)?;
        let recovered = accepted(&mut w)?;
        probes.push(Probe { attack, lag, recovered });
        Ok::<_, SimError>(())
    };

    for channel in ChannelName::ALL {
        probe(format!("drop {channel}"), base.clone(), &mut |w| {
            w.hooks = next_session(w, channel, HookAction::Drop);
            settle(w.run_session(&[ID])).map(|_| ())
        })?;
    }
    for channel in [ChannelName::ReaderToTag, ChannelName::ReaderToServer] {
        probe(format!("replay {channel}"), base.clone(), &mut |w| {
            w.hooks = next_session(w, channel, HookAction::Replay(0));
            settle(w.run_session(&[ID])).map(|_| ())
        })?;
    }
    let forged_hello =
        ReaderHello { t_r: Word64(rng.random()), r_r: Word64(rng.random()), auth_digest: Digest(rng.random()) };
    probe("forge R->T".into(), base.clone(), &mut |w| w.tag_receive(ID, &forged_hello).map(|_| ()))?;
    let forged_report: Vec<u8> = (0..16).map(|_| rng.random()).collect();
    probe("forge R->S".into(), base.clone(), &mut |w| {
        w.hooks = next_session(w, ChannelName::ReaderToServer, HookAction::Inject(HexBytes(forged_report.clone())));
        settle(w.run_session(&[ID])).map(|_| ())
    })?;

    let desync_s = probes.iter().map(|p| p.lag.max(0) as u64).max().unwrap_or(0);
    let desync_t = probes.iter().map(|p| (-p.lag).max(0) as u64).max().unwrap_or(0);

    let resync_s = counter_loop(&base, |w| {
        w.hooks = next_session(w, ChannelName::TagToReader, HookAction::Drop);
        settle(w.run_session(&[ID])).map(|_| ())
    })?;
    let resync_t = counter_loop(&base, |w| {
        let r = Word64(rng.random());
        w.server.force_update(ID, r).map_err(SimError::from)
    })?;

    Ok(DesyncReport {
        scheme,
        desync_s,
        desync_t,
        resync_s,
        resync_t,
        synchronizable: desync_s <= resync_s && desync_t <= resync_t,
        probes,
    })
}

fn counter_loop(
    base: &World,
    mut update: impl FnMut(&mut World) -> Result<(), SimError>,
) -> Result<u64, ExperimentError> {
    let mut world = base.clone();
    for ct in 1..=MAX_ROUNDS {
        for _ in 0..ct {
            update(&mut world)?;
        }
        if !accepted(&mut world)? {
            return Ok(ct - 1);
        }
    }
    Ok(MAX_ROUNDS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_schemes_are_one_zero_one_zero() {
        for scheme in Scheme::ALL {
            let r = measure_desync(scheme, 11, Rules::default()).unwrap();
            assert_eq!(r.tuple(), (1, 0, 1, 0), "{scheme}: {:?}", r.probes);
            assert!(r.synchronizable);
            assert!(r.probes.iter().all(|p| p.recovered), "{:?}", r.probes);
        }
    }
}
