//! Service configuration: a TOML file, then `ARENA_*` environment overrides.

use std::path::{Path, PathBuf};

use arena_core::ingest::SyncPolicy;
use arena_core::rating::BothBadPolicy;
use arena_core::validation::Thresholds;
use arena_core::{ArenaError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Catalog manifest merged into the log at startup, if set.
    pub catalog: Option<PathBuf>,
    pub log: PathBuf,
    pub bind: String,
    /// Directory that `render_refs` and image prompt paths are relative to.
    pub render_root: PathBuf,
    /// Scorer files evaluated by the metrics report.
    pub scorers: Vec<PathBuf>,
    /// JSON map `asset_id -> dimension -> score` of gold absolute scores.
    pub gold_scores: Option<PathBuf>,
    /// `always` or `never`.
    pub sync: String,
    /// `draw` or `skip`.
    pub both_bad: String,
    pub arena_session_size: usize,
    pub thresholds: Thresholds,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            catalog: None,
            log: PathBuf::from("events.log"),
            bind: "127.0.0.1:8080".into(),
            render_root: PathBuf::from("."),
            scorers: Vec::new(),
            gold_scores: None,
            sync: "always".into(),
            both_bad: "draw".into(),
            arena_session_size: 10,
            thresholds: Thresholds::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Config> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ArenaError::io(p, e))?;
                let mut cfg: Config = toml::from_str(&text).map_err(|e| ArenaError::format(p, e.to_string()))?;
                cfg.resolve_relative(p.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.sync_policy()?;
        cfg.both_bad_policy()?;
        Ok(cfg)
    }

    /// Paths in a config file are relative to the file.
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = self.catalog.as_mut() {
            fix(c);
        }
        if let Some(g) = self.gold_scores.as_mut() {
            fix(g);
        }
        fix(&mut self.log);
        fix(&mut self.render_root);
        self.scorers.iter_mut().for_each(fix);
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(v) = get("ARENA_CATALOG") {
            self.catalog = Some(v.into());
        }
        if let Some(v) = get("ARENA_LOG") {
            self.log = v.into();
        }
        if let Some(v) = get("ARENA_BIND") {
            self.bind = v;
        }
        if let Some(v) = get("ARENA_RENDER_ROOT") {
            self.render_root = v.into();
        }
        if let Some(v) = get("ARENA_SYNC") {
            self.sync = v;
        }
        if let Some(v) = get("ARENA_BOTH_BAD") {
            self.both_bad = v;
        }
        let t = &mut self.thresholds;
        for (key, slot) in [
            ("ARENA_GOLD_CONFLICT", &mut t.gold_conflict),
            ("ARENA_CROSS_CONFLICT", &mut t.cross_conflict),
            ("ARENA_TIE_RATIO", &mut t.tie_ratio),
            ("ARENA_SCORE_ERROR", &mut t.score_error),
            ("ARENA_SCORE_CONFLICT", &mut t.score_conflict),
        ] {
            if let Some(v) = get(key) {
                *slot = v
                    .parse()
                    .map_err(|_| ArenaError::Config(format!("{key}={v} is not a number")))?;
            }
        }
        Ok(())
    }

    pub fn sync_policy(&self) -> Result<SyncPolicy> {
        match self.sync.as_str() {
            "always" => Ok(SyncPolicy::Always),
            "never" => Ok(SyncPolicy::Never),
            s => Err(ArenaError::Config(format!("sync must be 'always' or 'never', got '{s}'"))),
        }
    }

    pub fn both_bad_policy(&self) -> Result<BothBadPolicy> {
        self.both_bad.parse().map_err(|e: ArenaError| ArenaError::Config(e.to_string()))
    }
}
