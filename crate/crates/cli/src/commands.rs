use std::io::Write;

use serde::Serialize;
use serde_json::json;
use tagchain::cost::{cost_report, CostError, CostParams, CostReport};
use tagchain::experiments::{
    measure_desync, run_experiment, DesyncReport, ExperimentError, ExperimentName, ExperimentParams, ExperimentReport,
};
use tagchain::golden::{regenerate, GoldenFile};
use tagchain::reader::ExclusionReason;
use tagchain::simnet::{SimError, World, WorldConfig};
use tagchain::{Msg, Rules, Scheme, TagId};

use crate::args::{Cli, Command, CostArgs, ExperimentArgs, GoldenArgs, SimulateArgs};
use crate::config::{load_hooks, FileConfig, RunConfig};
use crate::CliError;

pub const DEFAULT_TRIALS: u64 = 10_000;
const DEFAULT_TAGS: u32 = 1;
const DEFAULT_SESSIONS: u32 = 1;
const DEFAULT_COST_TAGS: u32 = 200;

/// Output style: JSON lines for machines, aligned text for a terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Json,
    Text,
}

/// Runs the parsed command. `Ok(false)` means the run completed but its
/// check failed.
pub fn run(cli: &Cli, style: Style, out: &mut dyn Write) -> Result<bool, CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => file.seed()?.unwrap_or(0),
    };
    match &cli.command {
        Command::Simulate(a) => simulate(&resolve_run(a, &file, seed)?, style, out),
        Command::Experiment(a) => experiment(a, &file, seed, style, out),
        Command::Cost(a) => cost(a, &file, style, out),
        Command::Golden(a) => golden(a, out),
    }
}

pub fn resolve_run(a: &SimulateArgs, file: &FileConfig, seed: u64) -> Result<RunConfig, CliError> {
    let hooks_name = a.hooks.clone().or_else(|| file.hooks.clone()).unwrap_or_else(|| "honest".into());
    let cfg = RunConfig {
        scheme: a.scheme.or(file.scheme).unwrap_or_default(),
        tags: a.tags.or(file.tags).unwrap_or(DEFAULT_TAGS),
        sessions: a.sessions.or(file.sessions).unwrap_or(DEFAULT_SESSIONS),
        seed,
        hooks: load_hooks(&hooks_name)?,
        hooks_name,
        output: a.output.clone().or_else(|| file.output.clone()),
        mutant: a.mutant.or(file.mutant),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct Excluded {
    tag: TagId,
    reason: ExclusionReason,
}

#[derive(Debug, Serialize)]
struct SessionLine {
    session: u64,
    msg: Option<Msg>,
    server_msg: Option<Msg>,
    marked: usize,
    excluded: Vec<Excluded>,
    /// A hook did something other than pass or observe.
    interfered: bool,
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let s = serde_json::to_string(value).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(out, "{s}")?;
    Ok(())
}

fn show(msg: Option<Msg>) -> &'static str {
    msg.map_or("-", Msg::as_str)
}

pub fn simulate(cfg: &RunConfig, style: Style, out: &mut dyn Write) -> Result<bool, CliError> {
    let rules = Rules { mutant: cfg.mutant, ..Rules::default() };
    let config = WorldConfig::new(cfg.scheme, cfg.tags, cfg.seed).with_rules(rules).with_hooks(cfg.hooks.clone());
    let mut world = World::new(config).map_err(|e| CliError::Usage(e.to_string()))?;
    let ids = world.ids();
    let mut all_honest_valid = true;
    if style == Style::Text {
        writeln!(
            out,
            "{:>7}  {:<15} {:<15} {:>7} {:>8}  interfered",
            "session", "reader", "server", "marked", "excluded"
        )?;
    }
    for _ in 0..cfg.sessions {
        let before = world.transcript.events.len();
        let result = match world.run_session(&ids) {
            Ok(r) => r,
            Err(SimError::EmptyBatch(r)) => *r,
            Err(e) => return Err(CliError::Run(e.to_string())),
        };
        let interfered =
            world.transcript.events[before..].iter().any(|e| !matches!(e.hook_action.as_str(), "pass" | "observe"));
        if !interfered && result.msg != Some(Msg::TagValid) {
            all_honest_valid = false;
        }
        let line = SessionLine {
            session: result.session,
            msg: result.msg,
            server_msg: result.server_msg,
            marked: result.marked.len(),
            excluded: result.excluded.iter().map(|(tag, reason)| Excluded { tag: *tag, reason: *reason }).collect(),
            interfered,
        };
        match style {
            Style::Json => json_line(out, &line)?,
            Style::Text => writeln!(
                out,
                "{:>7}  {:<15} {:<15} {:>7} {:>8}  {}",
                line.session,
                show(line.msg),
                show(line.server_msg),
                line.marked,
                line.excluded.len(),
                if interfered { "yes" } else { "no" }
            )?,
        }
    }
    if let Some(path) = &cfg.output {
        std::fs::write(path, world.transcript.to_jsonl())?;
        log::info!("wrote {} events to {}", world.transcript.events.len(), path.display());
    }
    Ok(all_honest_valid)
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Sim(s) => CliError::Run(s.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn experiment(
    a: &ExperimentArgs,
    file: &FileConfig,
    seed: u64,
    style: Style,
    out: &mut dyn Write,
) -> Result<bool, CliError> {
    let scheme = a.scheme.or(file.scheme).unwrap_or_default();
    let mutant = a.mutant.or(file.mutant);
    if a.name == ExperimentName::Desync {
        let report = measure_desync(scheme, seed, Rules { mutant, ..Rules::default() }).map_err(experiment_error)?;
        print_desync(&report, style, out)?;
        return Ok(report.synchronizable);
    }
    let params = ExperimentParams {
        scheme,
        trials: a.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS),
        seed,
        mutant,
        adversary: a.adversary.clone().or_else(|| file.adversary.clone()),
        cloning_mode: a.cloning_mode(),
        lift_restriction: a.lift_restriction,
    };
    let report = run_experiment(a.name, &params).map_err(experiment_error)?;
    print_report(&report, style, out)?;
    Ok(report.passed())
}

fn print_report(r: &ExperimentReport, style: Style, out: &mut dyn Write) -> Result<(), CliError> {
    if style == Style::Json {
        return json_line(out, r);
    }
    let verdict = serde_json::to_value(r.verdict).map_err(|e| CliError::Run(e.to_string()))?;
    writeln!(out, "experiment  {} ({})", r.experiment, r.scheme)?;
    writeln!(out, "adversary   {}", r.adversary)?;
    if let Some(m) = r.mutant {
        writeln!(out, "mutant      {m}")?;
    }
    writeln!(out, "trials      {}  wins {}", r.trials, r.wins)?;
    writeln!(
        out,
        "{:<11} {:.4} ± {:.4}  (threshold {})",
        format!("{:?}", r.metric).to_lowercase(),
        r.advantage,
        r.ci95,
        r.threshold
    )?;
    for (k, v) in &r.detail {
        writeln!(out, "  {k}: {v}")?;
    }
    writeln!(out, "verdict     {}", verdict.as_str().unwrap_or("?"))?;
    Ok(())
}

fn print_desync(r: &DesyncReport, style: Style, out: &mut dyn Write) -> Result<(), CliError> {
    let verdict = if r.synchronizable { "synchronizable" } else { "desynchronizable" };
    let (ds, dt, rs, rt) = r.tuple();
    if style == Style::Json {
        let mut v = serde_json::to_value(r).map_err(|e| CliError::Run(e.to_string()))?;
        v["experiment"] = json!("desync");
        v["tuple"] = json!([ds, dt, rs, rt]);
        v["verdict"] = json!(verdict);
        return json_line(out, &v);
    }
    for p in &r.probes {
        writeln!(
            out,
            "{:<14} lag {:>2}  next session {}",
            p.attack,
            p.lag,
            if p.recovered { "accepted" } else { "rejected" }
        )?;
    }
    writeln!(out, "({ds}, {dt}, {rs}, {rt}) {verdict}")?;
    Ok(())
}

fn cost_error(e: CostError) -> CliError {
    match e {
        CostError::EmptyBatch => CliError::Usage(e.to_string()),
        CostError::InternalConsistency(_) => CliError::Run(e.to_string()),
    }
}

pub fn cost(a: &CostArgs, file: &FileConfig, style: Style, out: &mut dyn Write) -> Result<bool, CliError> {
    let scheme = a.scheme.or(file.scheme).unwrap_or(Scheme::S2);
    let n = a.tags.or(file.tags).unwrap_or(DEFAULT_COST_TAGS) as usize;
    let report = cost_report(scheme, n, !a.no_aggregate, &CostParams::default()).map_err(cost_error)?;
    match style {
        Style::Json => json_line(out, &report)?,
        Style::Text => print_cost(&report, out)?,
    }
    Ok(true)
}

fn print_cost(r: &CostReport, out: &mut dyn Write) -> Result<(), CliError> {
    let t = &r.session_time;
    writeln!(out, "session time ({})", r.scheme)?;
    writeln!(out, "  tag compute  {:>8.4} ms", t.tag_compute_ms)?;
    writeln!(out, "  T->R         {:>8.4} ms", t.t2r_ms)?;
    writeln!(out, "  R->T         {:>8.4} ms", t.r2t_ms)?;
    writeln!(out, "  total        {:>8.4} ms", t.total_ms)?;
    let label = if r.aggregated { "aggregated" } else { "not aggregated" };
    writeln!(out, "reader->server, n = {} ({label})", r.n)?;
    writeln!(out, "  {} bits, {:.4} s", r.reader_server.bits, r.reader_server.seconds)?;
    writeln!(
        out,
        "  without aggregation {} bits, {:.4} s; aggregation saves {:.1}%",
        r.reader_server_plain.bits,
        r.reader_server_plain.seconds,
        r.savings * 100.0
    )?;
    writeln!(
        out,
        "{:<8} {:>9} {:>6} {:>7} {:>5} {:>5} {:>9} {:>5}",
        "scheme", "tag comp", "flows", "memory", "T->R", "R->T", "R->S", "S->R"
    )?;
    for row in &r.table3 {
        writeln!(
            out,
            "{:<8} {:>4} hash {:>6} {:>3} bit {:>4}b {:>4}b {:>9} {:>4}b",
            row.scheme.to_string(),
            row.tag_comp_hash,
            row.message_flows,
            row.tag_memory_bits,
            row.t2r_words,
            row.r2t_words,
            row.r2s_formula(),
            row.s2r_words
        )?;
    }
    Ok(())
}

pub fn golden(a: &GoldenArgs, out: &mut dyn Write) -> Result<bool, CliError> {
    if a.regen_golden {
        let changed = regenerate(&a.path)?;
        writeln!(out, "{}", json!({ "path": a.path, "changed": changed }))?;
        return Ok(true);
    }
    let file = match std::fs::read_to_string(&a.path) {
        Ok(text) => serde_json::from_str::<GoldenFile>(&text)
            .map_err(|e| CliError::Usage(format!("invalid golden file {}: {e}", a.path.display())))?,
        Err(_) => GoldenFile::pinned().map_err(|e| CliError::Run(e.to_string()))?,
    };
    let bad = file.mismatches();
    writeln!(out, "{}", json!({ "path": a.path, "vectors": file.hash.len() + file.prng.len(), "mismatches": bad }))?;
    Ok(bad.is_empty())
}
