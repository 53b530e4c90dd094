//! The `arena` command line.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use arena_core::ingest::{load_embedding_set, load_manifest, read_log, EmbeddingStore, Event, GoldKey, LoggedEvent};
use arena_core::metrics::{load_scorer_file, AssetScores, ScorerFile};
use arena_core::rating::{Leaderboard, RankBy};
use arena_core::scheduler::{build_packs, export_packs, sample_battles, Schedule};
use arena_core::scorehead::{
    asset_embeddings, curve_to_csv, load_checkpoint, preference_set, save_checkpoint, score_catalog, train_absolute,
    train_preference, AbsoluteHeadParams, BothBadTarget, Checkpoint, ScoreHeadParams, ScoredAsset, TrainConfig,
};
use arena_core::validation::{RecordedVote, Thresholds, ValidatedVote};
use arena_core::{
    AbsoluteScore, ArenaError, ArenaState, BoardKey, ComparisonVote, Dimension, Result, Track, VoteSource,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::report::{expert_votes, load_gold_scores, metric_reports, metrics_to_text, on_track, validation_summary, GoldScores};
use crate::store::Store;

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Pairwise-preference arena for 3D generative models")]
pub struct Cli {
    /// TOML config; `ARENA_*` environment variables override it.
    #[arg(long, global = true, env = "ARENA_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Append a catalog, schedule, gold keys, votes or scores to the log.
    Ingest(IngestArgs),
    /// Sample battles, bundle them into packs and append the schedule.
    Schedule(ScheduleArgs),
    /// Run annotator validation and report quarantines.
    Validate(ValidateArgs),
    /// Print a leaderboard.
    Leaderboard(LeaderboardArgs),
    /// Pairwise alignment and Kendall tau of a scorer against votes.
    EvaluateScorer(EvaluateArgs),
    /// Train preference or absolute score heads.
    TrainHeads(TrainArgs),
    /// Score every catalog asset with trained heads.
    ScoreAssets(ScoreAssetsArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Write leaderboards, validation and metric reports to a directory.
    ExportReport(ExportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Event log; defaults to the configured one.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Machine-readable JSON on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub gold_conflict: Option<f64>,
    #[arg(long)]
    pub cross_conflict: Option<f64>,
    #[arg(long)]
    pub tie_ratio: Option<f64>,
    #[arg(long)]
    pub score_error: Option<f64>,
    #[arg(long)]
    pub score_conflict: Option<f64>,
}

impl ThresholdArgs {
    fn apply(&self, mut t: Thresholds) -> Thresholds {
        let pairs = [
            (self.gold_conflict, &mut t.gold_conflict),
            (self.cross_conflict, &mut t.cross_conflict),
            (self.tie_ratio, &mut t.tie_ratio),
            (self.score_error, &mut t.score_error),
            (self.score_conflict, &mut t.score_conflict),
        ];
        for (v, slot) in pairs {
            if let Some(v) = v {
                *slot = v;
            }
        }
        t
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: Common,
    /// Catalog manifest (JSON); only additions are appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Schedule batch (JSON with `pairs` and `packs`).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Gold answer keys, one JSON object per line.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Comparison votes, one JSON object per line.
    #[arg(long)]
    pub votes: Option<PathBuf>,
    /// Absolute scores, one JSON object per line.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub pairs: usize,
    /// Restrict to one track.
    #[arg(long)]
    pub track: Option<TrackArg>,
    #[arg(long, default_value_t = 30)]
    pub pack_size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub cross_fraction: f64,
    #[arg(long, default_value_t = 0.05)]
    pub gold_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the pack hand-off document here.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Gold absolute scores: JSON map `asset_id -> dimension -> score`.
    #[arg(long)]
    pub gold_scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrackArg {
    #[value(name = "text_to_3d")]
    Text,
    #[value(name = "image_to_3d")]
    Image,
}

impl From<TrackArg> for Track {
    fn from(t: TrackArg) -> Track {
        match t {
            TrackArg::Text => Track::TextTo3d,
            TrackArg::Image => Track::ImageTo3d,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SourceArg {
    #[value(name = "expert_pack")]
    Expert,
    #[value(name = "arena")]
    Arena,
}

impl From<SourceArg> for VoteSource {
    fn from(s: SourceArg) -> VoteSource {
        match s {
            SourceArg::Expert => VoteSource::ExpertPack,
            SourceArg::Arena => VoteSource::Arena,
        }
    }
}

#[derive(Debug, Args)]
pub struct LeaderboardArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "expert_pack")]
    pub source: SourceArg,
    #[arg(long, value_enum, default_value = "text_to_3d")]
    pub track: TrackArg,
    /// `average` or a dimension name.
    #[arg(long, default_value = "average")]
    pub by: String,
    /// Rate only votes that survive validation.
    #[arg(long)]
    pub validated: bool,
    /// Recompute every live board from a full replay first; a mismatch fails.
    #[arg(long)]
    pub verify: bool,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct HeadSource {
    /// Scorer file (JSON asset scores).
    #[arg(long, conflicts_with_all = ["heads", "embeddings"])]
    pub scorer: Option<PathBuf>,
    /// Trained head checkpoint.
    #[arg(long, requires = "embeddings")]
    pub heads: Option<PathBuf>,
    /// Embedding stores for the catalog.
    #[arg(long, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub source: HeadSource,
    /// Held-out votes, one JSON object per line. Defaults to the log's
    /// validated expert votes.
    #[arg(long)]
    pub against: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text_to_3d")]
    pub track: TrackArg,
    /// Harden predictions to 0 or 1 before comparing.
    #[arg(long)]
    pub binarized: bool,
    /// Row label; defaults to the scorer's own name or the checkpoint file stem.
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadKind {
    Preference,
    Absolute,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BothBadArg {
    Tie,
    Skip,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "preference")]
    pub kind: HeadKind,
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Prompt split to train on.
    #[arg(long, value_enum, default_value = "train")]
    pub split: SplitArg,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    /// Mini-batch size; 0 for full batch.
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 100)]
    pub warmup: usize,
    /// Training target for both-bad votes.
    #[arg(long, value_enum, default_value = "tie")]
    pub both_bad: BothBadArg,
    /// Write the loss curve as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long)]
    pub gold_scores: Option<PathBuf>,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct ScoreAssetsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub heads: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub name: Option<String>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub render_root: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub out: PathBuf,
    /// Scorer files for the metric tables; defaults to the configured ones.
    #[arg(long)]
    pub scorer: Vec<PathBuf>,
    #[arg(long)]
    pub gold_scores: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => ingest(&config, a),
        Command::Schedule(a) => schedule(&config, a),
        Command::Validate(a) => validate(&config, a),
        Command::Leaderboard(a) => leaderboard(&config, a),
        Command::EvaluateScorer(a) => evaluate(&config, a),
        Command::TrainHeads(a) => train(&config, a),
        Command::ScoreAssets(a) => score_assets(&config, a),
        Command::Serve(a) => serve(config, a),
        Command::ExportReport(a) => export(&config, a),
    }
}

fn log_path<'a>(config: &'a Config, common: &'a Common) -> &'a Path {
    common.log.as_deref().unwrap_or(&config.log)
}

/// State as of the durable prefix. Never modifies the file, so it is safe
/// next to a running server.
fn load_state(config: &Config, common: &Common) -> Result<ArenaState> {
    let events = read_log(log_path(config, common))?;
    ArenaState::replay(&events, config.both_bad_policy()?)
}

fn emit(json: bool, value: &impl Serialize, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        println!("{}", serde_json::to_string_pretty(value)?);
    } else {
        print!("{}", text());
    }
    Ok(())
}

/// One JSON value per non-blank line.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| ArenaError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ArenaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ArenaError::format(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| ArenaError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ArenaError::format(path, e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| ArenaError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| ArenaError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Checks every event against a scratch copy of the state, then appends them
/// all. A bad input file leaves the log untouched.
fn append_all(store: &mut Store, events: Vec<Event>) -> Result<u64> {
    let mut scratch = store.state.clone();
    for (i, e) in events.iter().enumerate() {
        scratch.apply(&LoggedEvent { seq_no: scratch.last_seq + 1, event: e.clone() }).map_err(|err| {
            ArenaError::invalid("input", format!("event {} of {}: {err}", i + 1, events.len()))
        })?;
    }
    let mut last = store.state.last_seq;
    for e in events {
        last = store.append(e)?;
    }
    Ok(last)
}

fn open_store(config: &Config, common: &Common) -> Result<Store> {
    let (store, recovery) = Store::open(log_path(config, common), config.sync_policy()?, config.both_bad_policy()?)?;
    if recovery.truncated_bytes > 0 {
        eprintln!("recovered log: dropped a torn tail of {} bytes", recovery.truncated_bytes);
    }
    Ok(store)
}

fn ingest(config: &Config, a: IngestArgs) -> Result<()> {
    let mut store = open_store(config, &a.common)?;
    let mut events = Vec::new();
    let mut counts = BTreeMap::new();
    if let Some(p) = &a.manifest {
        let changes = store.state.catalog.diff(&load_manifest(p)?)?;
        counts.insert("catalog", changes.len());
        events.extend(changes.into_iter().map(Event::Catalog));
    }
    if let Some(p) = &a.schedule {
        events.push(Event::Schedule(read_json(p)?));
        counts.insert("schedule", 1);
    }
    if let Some(p) = &a.gold {
        let keys: Vec<GoldKey> = read_jsonl(p)?;
        counts.insert("gold", keys.len());
        events.extend(keys.into_iter().map(Event::Gold));
    }
    if let Some(p) = &a.votes {
        let votes: Vec<ComparisonVote> = read_jsonl(p)?;
        counts.insert("votes", votes.len());
        events.extend(votes.into_iter().map(Event::Vote));
    }
    if let Some(p) = &a.scores {
        let scores: Vec<AbsoluteScore> = read_jsonl(p)?;
        counts.insert("scores", scores.len());
        events.extend(scores.into_iter().map(Event::Score));
    }
    let total = events.len();
    let last_seq = append_all(&mut store, events)?;
    let out = json!({
        "appended": total,
        "by_kind": counts,
        "last_seq": last_seq,
        "state_hash": store.state.state_hash(),
    });
    emit(a.common.json, &out, || {
        let kinds: Vec<String> = counts.iter().map(|(k, n)| format!("{k}={n}")).collect();
        format!("appended {total} events ({}); last seq {last_seq}\n", kinds.join(", "))
    })
}

fn schedule(config: &Config, a: ScheduleArgs) -> Result<()> {
    let mut store = open_store(config, &a.common)?;
    let catalog = match a.track {
        Some(t) => store.state.catalog.track_subset(t.into())?,
        None => store.state.catalog.clone(),
    };
    let pairs = sample_battles(&catalog, a.pairs, a.seed)?;
    let Schedule { pairs, packs } = build_packs(pairs, a.pack_size, a.cross_fraction, a.gold_fraction, a.seed)?;
    let schedule = Schedule { pairs, packs };
    if let Some(p) = &a.export {
        write_json(p, &export_packs(&schedule))?;
    }
    let (n_pairs, n_packs) = (schedule.pairs.len(), schedule.packs.len());
    let n_cross = schedule.packs.iter().filter(|p| p.flags.is_cross_annotation).count();
    let n_gold: usize = schedule.packs.iter().map(|p| p.gold_pair_ids.len()).sum();
    let seq = append_all(
        &mut store,
        vec![Event::Schedule(arena_core::ingest::ScheduleBatch { pairs: schedule.pairs, packs: schedule.packs })],
    )?;
    let out = json!({ "seq_no": seq, "pairs": n_pairs, "packs": n_packs, "cross_packs": n_cross, "gold_pairs": n_gold });
    emit(a.common.json, &out, || {
        format!("scheduled {n_pairs} pairs in {n_packs} packs ({n_cross} cross, {n_gold} gold pairs) at seq {seq}\n")
    })
}

fn gold_scores(config: &Config, flag: &Option<PathBuf>) -> Result<GoldScores> {
    match flag.as_ref().or(config.gold_scores.as_ref()) {
        Some(p) => load_gold_scores(p),
        None => Ok(GoldScores::new()),
    }
}

fn validate(config: &Config, a: ValidateArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    let thresholds = a.thresholds.apply(config.thresholds);
    let summary = validation_summary(&state, &thresholds, &gold_scores(config, &a.gold_scores)?)?;
    emit(a.common.json, &summary, || summary.to_text())
}

fn leaderboard(config: &Config, a: LeaderboardArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    if a.verify {
        state.verify_leaderboards()?;
    }
    let key = BoardKey { source: a.source.into(), track: a.track.into() };
    let by: RankBy = a.by.parse()?;
    let table = if a.validated {
        state.validated_table(key, &state.validate_votes(&a.thresholds.apply(config.thresholds))?)?
    } else {
        state.live_table(key)
    };
    let board = Leaderboard::from_table(&table, by, &state.display_names());
    let out = json!({
        "version": state.leaderboard_version,
        "source": key.source,
        "track": key.track,
        "validated": a.validated,
        "verified": a.verify,
        "ranked_by": board.ranked_by,
        "rows": board.rows,
    });
    emit(a.common.json, &out, || board.to_text())
}

/// Preference heads, absolute heads, or a scorer file, as asset scores.
fn load_scores(state: &ArenaState, src: &HeadSource, name: Option<&str>) -> Result<(String, AssetScores)> {
    if let Some(p) = &src.scorer {
        let f = load_scorer_file(p)?;
        return Ok((name.map_or(f.scorer.clone(), String::from), f.asset_scores()?));
    }
    let heads = src
        .heads
        .as_ref()
        .ok_or_else(|| ArenaError::invalid("heads", "give --scorer, or --heads with --embeddings"))?;
    let store = load_embedding_set(&src.embeddings)?;
    let label = name.map(String::from).unwrap_or_else(|| {
        heads.file_stem().map_or("heads".into(), |s| s.to_string_lossy().into_owned())
    });
    Ok((label, scores_from_checkpoint(state, load_checkpoint(heads)?, &store)?))
}

fn scores_from_checkpoint(state: &ArenaState, ck: Checkpoint, store: &EmbeddingStore) -> Result<AssetScores> {
    match ck {
        Checkpoint::Preference(p) => score_catalog(&p, &state.catalog, store),
        Checkpoint::Absolute(p) => {
            let mut out = AssetScores::new();
            for asset in state.catalog.assets.values() {
                let Ok(e) = asset_embeddings(&asset.asset_id, store) else { continue };
                let y = p.predict(&e.normal, &e.rgb)?;
                out.insert(asset.asset_id.clone(), Dimension::ALL.into_iter().zip(y).collect());
            }
            Ok(out)
        }
    }
}

fn evaluate(config: &Config, a: EvaluateArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    let track: Track = a.track.into();
    let (name, scores) = load_scores(&state, &a.source, a.name.as_deref())?;
    let votes: Vec<ValidatedVote> = match &a.against {
        Some(p) => {
            let raw: Vec<ComparisonVote> = read_jsonl(p)?;
            let mut votes = Vec::new();
            for (i, v) in raw.into_iter().enumerate() {
                v.validate()?;
                let vv = ValidatedVote::from_raw(&RecordedVote { seq_no: i as u64 + 1, vote: v });
                if on_track(&state, &vv, track)? {
                    votes.push(vv);
                }
            }
            votes
        }
        None => expert_votes(&state, &config.thresholds, track)?,
    };
    if votes.is_empty() {
        return Err(ArenaError::invalid("against", "no votes on this track to evaluate against"));
    }
    let (alignment, tau) = metric_reports(&state, &[(name, scores)], &votes, track, a.binarized)?;
    let out = json!({
        "track": track,
        "votes": votes.len(),
        "binarized": a.binarized,
        "alignment": alignment.rows[0],
        "kendall_tau": tau.rows[0],
    });
    emit(a.common.json, &out, || metrics_to_text(&alignment, &tau))
}

fn split_ok(state: &ArenaState, prompt_id: &str, split: SplitArg) -> Result<bool> {
    let s = state.catalog.prompt(prompt_id)?.split;
    Ok(match split {
        SplitArg::All => true,
        SplitArg::Train => s == arena_core::model::Split::Train,
        SplitArg::Val => s == arena_core::model::Split::Val,
        SplitArg::Test => s == arena_core::model::Split::Test,
    })
}

fn train(config: &Config, a: TrainArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    let store = load_embedding_set(&a.embeddings)?;
    let thresholds = a.thresholds.apply(config.thresholds);
    let cfg = TrainConfig {
        lr: a.lr,
        steps: a.steps,
        batch: a.batch,
        seed: a.seed,
        momentum: a.momentum,
        warmup_steps: a.warmup,
    };
    let d = store.dim();
    let (examples, curve, ck) = match a.kind {
        HeadKind::Preference => {
            let mut votes = Vec::new();
            for v in state.validate_votes(&thresholds)?.valid_votes {
                if v.source == VoteSource::ExpertPack && split_ok(&state, &state.pairs[&v.pair_id].prompt_id, a.split)? {
                    votes.push(v);
                }
            }
            let both_bad = match a.both_bad {
                BothBadArg::Tie => BothBadTarget::Tie,
                BothBadArg::Skip => BothBadTarget::Skip,
            };
            let set = preference_set(&votes, &state.pairs, &state.catalog, &store, both_bad)?;
            let trained = train_preference(&ScoreHeadParams::init(d), &set, &cfg)?;
            (set.len(), trained.curve, Checkpoint::Preference(trained.params))
        }
        HeadKind::Absolute => {
            let cfg_scores = arena_core::validation::ScoreValidationConfig {
                thresholds,
                ..Default::default()
            };
            let finals = state.validate_scores(&gold_scores(config, &a.gold_scores)?, &cfg_scores)?.by_asset();
            let mut assets = Vec::new();
            for (asset_id, dims) in finals {
                let Some(targets) = dims.iter().copied().collect::<Option<Vec<f64>>>() else { continue };
                let asset = state.catalog.asset(&asset_id)?;
                if !split_ok(&state, &asset.prompt_id, a.split)? {
                    continue;
                }
                let Ok(e) = asset_embeddings(&asset_id, &store) else { continue };
                assets.push(ScoredAsset { normal: e.normal, rgb: e.rgb, targets: targets.try_into().unwrap() });
            }
            let trained = train_absolute(&AbsoluteHeadParams::zeros(d), &assets, &cfg)?;
            (assets.len(), trained.curve, Checkpoint::Absolute(trained.params))
        }
    };
    save_checkpoint(&a.out, &ck)?;
    if let Some(p) = &a.curve {
        write_text(p, &curve_to_csv(&curve))?;
    }
    let last_loss = curve.last().map(|c| c.loss);
    let out = json!({
        "kind": format!("{:?}", a.kind).to_lowercase(),
        "examples": examples,
        "steps": curve.len(),
        "final_loss": last_loss,
        "checkpoint": a.out,
    });
    emit(a.common.json, &out, || {
        format!(
            "trained on {examples} examples for {} steps, final loss {}; wrote {}\n",
            curve.len(),
            last_loss.map_or("-".into(), |l| format!("{l:.6}")),
            a.out.display()
        )
    })
}

fn score_assets(config: &Config, a: ScoreAssetsArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    let src = HeadSource { scorer: None, heads: Some(a.heads.clone()), embeddings: a.embeddings.clone() };
    let (name, scores) = load_scores(&state, &src, a.name.as_deref())?;
    write_json(&a.out, &ScorerFile::from_scores(&name, &scores))?;
    let out = json!({ "scorer": name, "assets": scores.len(), "out": a.out });
    emit(a.common.json, &out, || format!("scored {} assets as '{name}'; wrote {}\n", scores.len(), a.out.display()))
}

fn serve(mut config: Config, a: ServeArgs) -> Result<()> {
    if let Some(v) = a.log {
        config.log = v;
    }
    if let Some(v) = a.bind {
        config.bind = v;
    }
    if let Some(v) = a.catalog {
        config.catalog = Some(v);
    }
    if let Some(v) = a.render_root {
        config.render_root = v;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| ArenaError::Config(format!("tokio runtime: {e}")))?;
    rt.block_on(crate::server::serve(config))
}

fn export(config: &Config, a: ExportArgs) -> Result<()> {
    let state = load_state(config, &a.common)?;
    state.verify_leaderboards()?;
    let mut files: Vec<PathBuf> = Vec::new();
    let mut put = |name: String, body: String| -> Result<()> {
        let p = a.out.join(name);
        write_text(&p, &body)?;
        files.push(p);
        Ok(())
    };
    let validation = state.validate_votes(&config.thresholds)?;
    for track in [Track::TextTo3d, Track::ImageTo3d] {
        for source in [VoteSource::ExpertPack, VoteSource::Arena] {
            let key = BoardKey { source, track };
            let slug = format!("{}-{}", json_name(&source), json_name(&track));
            let boards = [("live", state.live_table(key)), ("validated", state.validated_table(key, &validation)?)];
            for (kind, table) in boards {
                if table.is_empty() {
                    continue;
                }
                let board = Leaderboard::from_table(&table, RankBy::Average, &state.display_names());
                put(format!("leaderboard-{slug}-{kind}.txt"), board.to_text())?;
                put(format!("leaderboard-{slug}-{kind}.json"), serde_json::to_string_pretty(&board)? + "\n")?;
            }
        }
    }
    let summary = validation_summary(&state, &config.thresholds, &gold_scores(config, &a.gold_scores)?)?;
    put("validation.txt".into(), summary.to_text())?;
    put("validation.json".into(), serde_json::to_string_pretty(&summary)? + "\n")?;

    let scorer_paths = if a.scorer.is_empty() { &config.scorers } else { &a.scorer };
    let mut scorers = Vec::new();
    for p in scorer_paths {
        let f = load_scorer_file(p)?;
        scorers.push((f.scorer.clone(), f.asset_scores()?));
    }
    if !scorers.is_empty() {
        for track in [Track::TextTo3d, Track::ImageTo3d] {
            let votes = expert_votes(&state, &config.thresholds, track)?;
            if votes.is_empty() {
                continue;
            }
            let (alignment, tau) = metric_reports(&state, &scorers, &votes, track, false)?;
            let slug = json_name(&track);
            put(format!("metrics-{slug}.txt"), metrics_to_text(&alignment, &tau))?;
            put(
                format!("metrics-{slug}.json"),
                serde_json::to_string_pretty(&json!({ "alignment": alignment, "kendall_tau": tau }))? + "\n",
            )?;
        }
    }
    let out = json!({ "files": files });
    emit(a.common.json, &out, || files.iter().map(|f| format!("wrote {}\n", f.display())).collect())
}

/// The serde name of a unit variant.
fn json_name(v: &impl Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}
