//! Security experiments as repeatable statistical games, plus power checks
//! against deliberately broken tags.
//!
//! Distinguishing games report `½·|P(b'=1 | b=1) − P(b'=1 | b=0)|`. It is 0
//! for an adversary whose guess ignores the view and ½ for a perfect one.
//! Forgery games report the win rate.

mod adversary;
mod desync;
mod games;
mod oracle;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{ProtocolMutant, Scheme};
use crate::simnet::SimError;

pub use adversary::{
    distinguisher, forger, CorruptedKeyForger, Distinguisher, ForgeView, Forger, KeyChainExtender,
    LinkabilityCorrelator, RandomForger, SessionView, TimeSplitter, TranscriptReplayer, View, ADVERSARY_NAMES,
};
pub use desync::{measure_desync, DesyncReport, Probe};
pub use games::{
    run_backward_security, run_cloning, run_forward_security, run_replay, run_timing, run_tracking, CloningMode,
    TrackingVariant,
};
pub use oracle::{OracleContext, TimedAnswer};

/// Advantage below which the real protocol passes.
pub const REAL_THRESHOLD: f64 = 0.05;
pub const MIN_TRIALS: u64 = 100;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("at least {MIN_TRIALS} trials are required, got {0}")]
    TooFewTrials(u64),
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("adversary {adversary:?} does not play {experiment}")]
    WrongAdversary { experiment: ExperimentName, adversary: String },
    #[error("simulation failed: {0}")]
    Sim(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentName {
    Forward,
    Backward,
    Tracking1,
    Tracking2,
    Cloning,
    Replay,
    Timing,
    Desync,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        ExperimentName::Forward,
        ExperimentName::Backward,
        ExperimentName::Tracking1,
        ExperimentName::Tracking2,
        ExperimentName::Cloning,
        ExperimentName::Replay,
        ExperimentName::Timing,
        ExperimentName::Desync,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentName::Forward => "forward",
            ExperimentName::Backward => "backward",
            ExperimentName::Tracking1 => "tracking1",
            ExperimentName::Tracking2 => "tracking2",
            ExperimentName::Cloning => "cloning",
            ExperimentName::Replay => "replay",
            ExperimentName::Timing => "timing",
            ExperimentName::Desync => "desync",
        }
    }

    pub fn metric(self) -> Metric {
        match self {
            ExperimentName::Cloning | ExperimentName::Replay => Metric::WinRate,
            _ => Metric::Advantage,
        }
    }

    pub fn default_adversary(self) -> &'static str {
        match self {
            ExperimentName::Forward | ExperimentName::Backward => "key-chain-extender",
            ExperimentName::Tracking1 | ExperimentName::Tracking2 => "linkability-correlator",
            ExperimentName::Timing => "time-splitter",
            ExperimentName::Cloning => "random-forger",
            ExperimentName::Replay => "transcript-replayer",
            ExperimentName::Desync => "flow-blocker",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentName::ALL
            .into_iter()
            .find(|e| e.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| ExperimentError::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Advantage,
    WinRate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Fail,
}

/// What a run is meant to show: the real protocol resists, a mutant is
/// caught, or an attack works once a game restriction is lifted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Real,
    Mutant,
    Control,
}

/// Advantage a mutant must exceed in a given game to count as detected.
pub fn detection_floor(experiment: ExperimentName, mutant: ProtocolMutant) -> f64 {
    use ExperimentName as E;
    use ProtocolMutant as M;
    match (experiment, mutant) {
        (E::Forward | E::Backward, M::NoKeyUpdate) => 0.4,
        (E::Tracking1 | E::Tracking2, M::StaticId | M::ReusedRt) => 0.45,
        (E::Timing, M::LeakyDecoy) => 0.45,
        _ => match experiment.metric() {
            Metric::Advantage => REAL_THRESHOLD,
            Metric::WinRate => 0.0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    pub scheme: Scheme,
    pub trials: u64,
    pub seed: u64,
    #[serde(default)]
    pub mutant: Option<ProtocolMutant>,
    #[serde(default)]
    pub adversary: Option<String>,
    #[serde(default)]
    pub cloning_mode: CloningMode,
    /// Backward security only: show the adversary the withheld nonce.
    #[serde(default)]
    pub lift_restriction: bool,
}

impl ExperimentParams {
    pub fn new(scheme: Scheme, trials: u64, seed: u64) -> Self {
        ExperimentParams {
            scheme,
            trials,
            seed,
            mutant: None,
            adversary: None,
            cloning_mode: CloningMode::default(),
            lift_restriction: false,
        }
    }

    pub fn with_mutant(mut self, mutant: ProtocolMutant) -> Self {
        self.mutant = Some(mutant);
        self
    }

    pub fn with_adversary(mut self, name: &str) -> Self {
        self.adversary = Some(name.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: ExperimentName,
    pub scheme: Scheme,
    pub adversary: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mutant: Option<ProtocolMutant>,
    pub mode: Mode,
    pub seed: u64,
    pub trials: u64,
    pub wins: u64,
    pub metric: Metric,
    /// Distinguishing advantage, or win rate for forgery games.
    pub advantage: f64,
    /// 95% half-width; for a win rate of zero, the one-sided bound `3/n`.
    pub ci95: f64,
    pub threshold: f64,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detail: Vec<(String, u64)>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Coin and guess counts merged across trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub real: u64,
    pub real_said_real: u64,
    pub fake: u64,
    pub fake_said_real: u64,
    pub wins: u64,
    pub attempts: u64,
    pub extra: [u64; 2],
}

impl Tally {
    pub fn guess(b: bool, guess: bool) -> Self {
        let mut t = Tally::default();
        if b {
            t.real = 1;
            t.real_said_real = guess as u64;
        } else {
            t.fake = 1;
            t.fake_said_real = guess as u64;
        }
        t.wins = (b == guess) as u64;
        t.attempts = 1;
        t
    }

    pub fn outcome(won: bool) -> Self {
        Tally { wins: won as u64, attempts: 1, ..Tally::default() }
    }

    fn merge(self, o: Tally) -> Tally {
        Tally {
            real: self.real + o.real,
            real_said_real: self.real_said_real + o.real_said_real,
            fake: self.fake + o.fake,
            fake_said_real: self.fake_said_real + o.fake_said_real,
            wins: self.wins + o.wins,
            attempts: self.attempts + o.attempts,
            extra: [self.extra[0] + o.extra[0], self.extra[1] + o.extra[1]],
        }
    }

    /// `(advantage, ci95)` for a distinguishing game.
    pub fn advantage(&self) -> (f64, f64) {
        if self.real == 0 || self.fake == 0 {
            return (0.0, 0.5);
        }
        let tpr = self.real_said_real as f64 / self.real as f64;
        let fpr = self.fake_said_real as f64 / self.fake as f64;
        let var = tpr * (1.0 - tpr) / self.real as f64 + fpr * (1.0 - fpr) / self.fake as f64;
        (0.5 * (tpr - fpr).abs(), 0.5 * 1.96 * var.sqrt())
    }

    /// `(win rate, ci95)` for a forgery game.
    pub fn win_rate(&self) -> (f64, f64) {
        let n = self.attempts.max(1) as f64;
        let p = self.wins as f64 / n;
        let ci = if self.wins == 0 { 3.0 / n } else { 1.96 * (p * (1.0 - p) / n).sqrt() };
        (p, ci)
    }
}

/// Runs `trials` independent trials in parallel. Trial `t` gets its own
/// stream of the seeded generator, so the result does not depend on
/// scheduling.
pub fn run_trials<F>(trials: u64, seed: u64, trial: F) -> Result<Tally, ExperimentError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Tally, ExperimentError> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            trial(&mut rng)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))
}

pub(crate) fn check_trials(trials: u64) -> Result<(), ExperimentError> {
    if trials < MIN_TRIALS {
        return Err(ExperimentError::TooFewTrials(trials));
    }
    Ok(())
}

pub(crate) fn finish_report(
    experiment: ExperimentName,
    params: &ExperimentParams,
    adversary: &str,
    tally: Tally,
    detail: Vec<(String, u64)>,
) -> ExperimentReport {
    let metric = experiment.metric();
    let (advantage, ci95) = match metric {
        Metric::Advantage => tally.advantage(),
        Metric::WinRate => tally.win_rate(),
    };
    let (mode, threshold, pass) = match params.mutant {
        Some(m) => {
            let floor = detection_floor(experiment, m);
            (Mode::Mutant, floor, advantage > floor)
        }
        None if params.lift_restriction => (Mode::Control, 0.4, advantage > 0.4),
        None => match metric {
            Metric::Advantage => (Mode::Real, REAL_THRESHOLD, advantage < REAL_THRESHOLD),
            Metric::WinRate => (Mode::Real, 0.0, tally.wins == 0),
        },
    };
    ExperimentReport {
        experiment,
        scheme: params.scheme,
        adversary: adversary.to_string(),
        mutant: params.mutant,
        mode,
        seed: params.seed,
        trials: params.trials,
        wins: tally.wins,
        metric,
        advantage,
        ci95,
        threshold,
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

/// Runs a named statistical experiment. `desync` has its own entry point,
/// [`measure_desync`].
pub fn run_experiment(name: ExperimentName, params: &ExperimentParams) -> Result<ExperimentReport, ExperimentError> {
    match name {
        ExperimentName::Forward => run_forward_security(params),
        ExperimentName::Backward => run_backward_security(params),
        ExperimentName::Tracking1 => run_tracking(TrackingVariant::Exp1, params),
        ExperimentName::Tracking2 => run_tracking(TrackingVariant::Exp2, params),
        ExperimentName::Cloning => run_cloning(params),
        ExperimentName::Replay => run_replay(params),
        ExperimentName::Timing => run_timing(params),
        ExperimentName::Desync => Err(ExperimentError::UnknownExperiment(
            "desync is measured with measure_desync, not as a trial game".into(),
        )),
    }
}
