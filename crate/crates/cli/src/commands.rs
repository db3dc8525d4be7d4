use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use dxstream_core::advantage::AdvantageConfig;
use dxstream_core::candidates::{
    build_candidates_with, CachedScorer, LabelPool, LexicalScorer, RelatednessScorer, RemoteScorer,
    DEFAULT_DISTRACTORS, DEFAULT_NEIGHBORHOOD_FACTOR,
};
use dxstream_core::env::io::{read_case_lines, read_cases, read_report, record_line, summary_line, write_cases};
use dxstream_core::env::synthetic::{generate, SyntheticConfig};
use dxstream_core::env::{
    cumulative_accuracy, delta_acc_at, final_accuracy, run_rollout_groups, run_stream, CaseItem, GroupConfig,
    StreamConfig, StreamRecord, StreamSummary, TrainerExportRecord,
};
use dxstream_core::memory::AgentState;
use dxstream_core::policy::remote_tool_schema;
use dxstream_core::seed::{derive_seed, stable_hash};
use dxstream_core::transport::ChatClientConfig;

use crate::config::{IoPaths, RunConfig, Task};
use crate::error::CliError;
use crate::fsio::{partial_path, write_atomic, AtomicWriter};
use crate::manifest::{RoundCount, RunManifest, RunStatus};

/// What a successful `run` produced.
#[derive(Debug)]
pub struct RunResult {
    pub summary: StreamSummary,
    pub manifest: RunManifest,
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn check_parent(path: &Path, what: &str) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Config(format!(
            "{what} directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn write_snapshot(dir: &Path, name: &str, state: &AgentState) -> Result<(), CliError> {
    write_atomic(&dir.join(name), &state.snapshot())
}

fn round_snapshot_name(round: u64) -> String {
    format!("round-{round:04}.json")
}

pub fn cmd_run(config_path: &Path) -> Result<RunResult, CliError> {
    let cfg = RunConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let paths = cfg.resolve_paths(base);
    if !paths.cases.is_file() {
        return Err(CliError::Input(format!("cases file {} not found", paths.cases.display())));
    }
    check_parent(&paths.report, "report")?;
    if let Some(p) = &paths.trainer_export {
        check_parent(p, "trainer export")?;
    }
    if let Some(dir) = &paths.snapshots {
        std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
    }

    let cases = read_cases(open(&paths.cases)?).map_err(|e| CliError::Input(format!("{}: {e}", paths.cases.display())))?;
    let policy = cfg
        .policy
        .build(cfg.memory_capacity)
        .map_err(|e| CliError::Policy(e.to_string()))?;
    log::info!("run: {} cases, task {:?}, config {}", cases.len(), cfg.task, cfg.hash());

    let stream = StreamConfig {
        mode: cfg.mode,
        memory_augmented: cfg.memory_augmented,
        capacity: cfg.memory_capacity,
        max_turns: cfg.max_turns,
        seed: cfg.seed,
        reward: Some(cfg.reward.clone()),
    };
    match cfg.task {
        Task::Evaluate => evaluate(&cfg, &paths, &cases, policy.as_ref(), stream),
        Task::RolloutGroups => rollout_groups(&cfg, &paths, &cases, policy.as_ref(), stream),
    }
}

fn evaluate(
    cfg: &RunConfig,
    paths: &IoPaths,
    cases: &[CaseItem],
    policy: &dyn dxstream_core::Policy,
    stream: StreamConfig,
) -> Result<RunResult, CliError> {
    let manifest_path = paths.manifest.clone().expect("resolved");
    let mut manifest = RunManifest::begin(cfg);
    let mut report = AtomicWriter::create(&paths.report)?;
    // the sink cannot fail, so the first write error is parked here
    let mut sink_error = None;
    let outcome = run_stream(policy, cases, &stream, |record, state| {
        if sink_error.is_some() {
            return;
        }
        let res = report.write_line(&record_line(record)).and_then(|_| match &paths.snapshots {
            Some(dir) => write_snapshot(dir, &round_snapshot_name(record.round_index), state),
            None => Ok(()),
        });
        if let Err(e) = res {
            sink_error = Some(e);
        }
    })
    .map_err(|e| CliError::Input(e.to_string()))?;
    if let Some(e) = sink_error {
        return Err(e);
    }
    manifest.round_records = outcome
        .records
        .iter()
        .map(|r| RoundCount {
            round: r.round_index,
            records: 1,
        })
        .collect();

    if let Some(abort) = &outcome.aborted {
        manifest.finish(RunStatus::Aborted, &manifest_path)?;
        return Err(CliError::Partial {
            round: abort.round_index,
            message: format!("case {}: {}", abort.case_id, abort.error),
            partial: report.partial().to_owned(),
        });
    }
    let summary = finish_report(report, &outcome.records, cfg)?;
    if let Some(dir) = &paths.snapshots {
        write_snapshot(dir, "final.json", &outcome.final_state)?;
    }
    let manifest = manifest.finish(RunStatus::Complete, &manifest_path)?;
    Ok(RunResult { summary, manifest })
}

fn finish_report(mut report: AtomicWriter, records: &[StreamRecord], cfg: &RunConfig) -> Result<StreamSummary, CliError> {
    let summary =
        StreamSummary::compute(records, &cfg.report_n, cfg.warmup).map_err(|e| CliError::Input(e.to_string()))?;
    report.write_line(&summary_line(&summary))?;
    report.commit()?;
    Ok(summary)
}

fn rollout_groups(
    cfg: &RunConfig,
    paths: &IoPaths,
    cases: &[CaseItem],
    policy: &dyn dxstream_core::Policy,
    stream: StreamConfig,
) -> Result<RunResult, CliError> {
    let manifest_path = paths.manifest.clone().expect("resolved");
    let export_path = paths.trainer_export.clone().expect("validated");
    let mut manifest = RunManifest::begin(cfg);
    let gcfg = GroupConfig {
        stream,
        group_size: cfg.group_size,
        reward: cfg.reward.clone(),
        advantage: AdvantageConfig {
            normalize_std: cfg.normalize_advantages,
        },
        parallel: cfg.parallel_rollouts,
    };
    let outcome = run_rollout_groups(policy, cases, &gcfg).map_err(|e| CliError::Input(e.to_string()))?;

    let mut report = AtomicWriter::create(&paths.report)?;
    for record in &outcome.records {
        report.write_line(&record_line(record))?;
    }
    let mut export = AtomicWriter::create(&export_path)?;
    for line in &outcome.export {
        let mut s = serde_json::to_string(line).expect("export serializes");
        s.push('\n');
        export.write_line(&s)?;
    }
    export.commit()?;
    if let Some(dir) = &paths.snapshots {
        let mut state_after = AgentState::new(cfg.memory_capacity).map_err(|e| CliError::Config(e.to_string()))?;
        for round in &outcome.rounds {
            if let Some(winner) = round.committed.and_then(|id| round.rollouts.iter().find(|o| o.rollout_id == id)) {
                state_after = winner.post_state.clone();
            }
            write_snapshot(dir, &round_snapshot_name(round.round_index), &state_after)?;
        }
        write_snapshot(dir, "final.json", &outcome.final_state)?;
    }
    manifest.round_records = outcome
        .rounds
        .iter()
        .map(|r| RoundCount {
            round: r.round_index,
            records: if r.group.is_some() { r.rollouts.len() } else { 0 },
        })
        .collect();

    // a round in which every rollout failed has no real record
    if let Some(lost) = outcome.rounds.iter().find(|r| r.committed.is_none()) {
        manifest.finish(RunStatus::Aborted, &manifest_path)?;
        return Err(CliError::Partial {
            round: lost.round_index,
            message: format!("case {}: every rollout failed", lost.case_id),
            partial: report.partial().to_owned(),
        });
    }
    let summary = finish_report(report, &outcome.records, cfg)?;
    let manifest = manifest.finish(RunStatus::Complete, &manifest_path)?;
    Ok(RunResult { summary, manifest })
}

#[derive(Debug, Clone)]
pub struct GenSyntheticArgs {
    pub params: SyntheticConfig,
    pub out: PathBuf,
    pub pool_out: Option<PathBuf>,
}

pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<usize, CliError> {
    args.params.validate().map_err(|e| CliError::Config(e.to_string()))?;
    check_parent(&args.out, "output")?;
    let stream = generate(&args.params).map_err(|e| CliError::Config(e.to_string()))?;
    let mut buf = Vec::new();
    write_cases(&mut buf, &stream.cases).expect("writing to memory");
    write_atomic(&args.out, &buf)?;
    if let Some(p) = &args.pool_out {
        let mut text = stream.pool.labels().join("\n");
        text.push('\n');
        write_atomic(p, text.as_bytes())?;
    }
    Ok(stream.cases.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Lexical,
    Remote,
}

#[derive(Debug, Clone)]
pub struct BuildCandidatesArgs {
    pub cases: PathBuf,
    pub pool: PathBuf,
    pub out: PathBuf,
    pub distractors: usize,
    pub factor: f64,
    pub seed: u64,
    pub scorer: ScorerKind,
    /// JSON chat client settings for the remote scorer.
    pub scorer_config: Option<PathBuf>,
    pub cache: Option<PathBuf>,
}

impl BuildCandidatesArgs {
    pub fn new(cases: PathBuf, pool: PathBuf, out: PathBuf) -> Self {
        Self {
            cases,
            pool,
            out,
            distractors: DEFAULT_DISTRACTORS,
            factor: DEFAULT_NEIGHBORHOOD_FACTOR,
            seed: 0,
            scorer: ScorerKind::Lexical,
            scorer_config: None,
            cache: None,
        }
    }
}

pub fn cmd_build_candidates(args: &BuildCandidatesArgs) -> Result<usize, CliError> {
    check_parent(&args.out, "output")?;
    let pool_text = std::fs::read_to_string(&args.pool)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.pool.display())))?;
    let pool = LabelPool::from_lines(&pool_text).map_err(|e| CliError::Input(e.to_string()))?;
    let lines = read_case_lines(open(&args.cases)?).map_err(|e| CliError::Input(e.to_string()))?;
    if lines.is_empty() {
        return Err(CliError::Input(format!("{} has no cases", args.cases.display())));
    }

    fn with_cache<S: RelatednessScorer>(
        inner: S,
        cache: Option<&Path>,
        f: &dyn Fn(&dyn RelatednessScorer) -> Result<usize, CliError>,
    ) -> Result<usize, CliError> {
        match cache {
            Some(p) => f(&CachedScorer::open(inner, p).map_err(|e| CliError::Input(e.to_string()))?),
            None => f(&inner),
        }
    }

    let build = |scorer: &dyn RelatednessScorer| -> Result<usize, CliError> {
        let mut items = Vec::with_capacity(lines.len());
        for line in &lines {
            let seed = derive_seed(args.seed, &[stable_hash(&line.id)]);
            let set = build_candidates_with(&line.gold, &pool, args.distractors, args.factor, scorer, seed)
                .map_err(|e| CliError::Input(format!("case {}: {e}", line.id)))?;
            let item = CaseItem::new(line.case(), set).map_err(|e| CliError::Input(e.to_string()))?;
            items.push(item);
        }
        let mut buf = Vec::new();
        write_cases(&mut buf, &items).expect("writing to memory");
        write_atomic(&args.out, &buf)?;
        Ok(items.len())
    };

    match args.scorer {
        ScorerKind::Lexical => with_cache(LexicalScorer, args.cache.as_deref(), &build),
        ScorerKind::Remote => {
            let client_cfg: ChatClientConfig = match &args.scorer_config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
                }
                None => ChatClientConfig::default(),
            };
            let scorer = RemoteScorer::new(client_cfg).map_err(|e| CliError::Policy(e.to_string()))?;
            with_cache(scorer, args.cache.as_deref(), &build)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsOutput {
    pub final_accuracy: f64,
    pub delta_acc: Vec<(usize, f64)>,
    pub rounds: usize,
}

impl MetricsOutput {
    pub fn render(&self) -> String {
        let mut s = format!("rounds\t{}\nfinal_accuracy\t{:.6}\n", self.rounds, self.final_accuracy);
        for (n, d) in &self.delta_acc {
            s.push_str(&format!("delta_acc@{n}\t{d:+.6}\n"));
        }
        s
    }
}

pub fn cmd_metrics(report: &Path, ns: &[usize], warmup: usize, csv: Option<&Path>) -> Result<MetricsOutput, CliError> {
    let parsed = read_report(open(report)?).map_err(|e| CliError::Input(format!("{}: {e}", report.display())))?;
    let records = &parsed.records;
    let final_accuracy = final_accuracy(records).map_err(|e| CliError::Input(e.to_string()))?;
    let delta_acc = ns
        .iter()
        .map(|&n| {
            delta_acc_at(records, n, warmup)
                .map(|d| (n, d))
                .map_err(|e| CliError::Input(format!("n = {n}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(path) = csv {
        let mut text = String::from("round,cumulative_accuracy\n");
        for (round, acc) in cumulative_accuracy(records) {
            text.push_str(&format!("{round},{acc}\n"));
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(MetricsOutput {
        final_accuracy,
        delta_acc,
        rounds: records.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemaKind {
    Cases,
    Report,
    Export,
    Snapshot,
    Config,
    ToolSchema,
}

/// Validates `path` as the given artifact and returns a one-line verdict.
/// `ToolSchema` ignores the path and prints the schema instead.
pub fn cmd_validate_schema(kind: SchemaKind, path: Option<&Path>) -> Result<String, CliError> {
    if kind == SchemaKind::ToolSchema {
        return Ok(serde_json::to_string_pretty(&remote_tool_schema()).expect("schema serializes"));
    }
    let path = path.ok_or_else(|| CliError::Config("a path is required".into()))?;
    let fail = |e: String| CliError::Input(format!("{}: {e}", path.display()));
    let read = || std::fs::read_to_string(path).map_err(|e| fail(e.to_string()));
    Ok(match kind {
        SchemaKind::Cases => {
            let items = read_cases(open(path)?).map_err(|e| fail(e.to_string()))?;
            format!("ok: {} cases", items.len())
        }
        SchemaKind::Report => {
            let r = read_report(open(path)?).map_err(|e| fail(e.to_string()))?;
            let tail = if r.summary.is_some() { "with summary" } else { "no summary" };
            format!("ok: {} records, {tail}", r.records.len())
        }
        SchemaKind::Export => {
            let text = read()?;
            let mut n = 0;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                TrainerExportRecord::parse_line(line).map_err(|e| fail(format!("line {}: {e}", i + 1)))?;
                n += 1;
            }
            format!("ok: {n} export records")
        }
        SchemaKind::Snapshot => {
            let bytes = std::fs::read(path).map_err(|e| fail(e.to_string()))?;
            let state = AgentState::restore(&bytes).map_err(|e| fail(e.to_string()))?;
            format!(
                "ok: capacity {}, {} cases, {} rules",
                state.capacity(),
                state.occupancy(),
                state.long_term().len()
            )
        }
        SchemaKind::Config => {
            let cfg = RunConfig::parse(&read()?)?;
            format!("ok: config {}", cfg.hash())
        }
        SchemaKind::ToolSchema => unreachable!(),
    })
}

/// Where `cmd_run` leaves an unfinished report.
pub fn partial_report_path(report: &Path) -> PathBuf {
    partial_path(report)
}
