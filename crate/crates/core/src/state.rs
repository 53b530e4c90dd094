//! Arena state as a fold over the event log.
//!
//! Every mutation is an [`Event`]; `check` decides whether an event may be
//! appended given the current state, `apply` folds a logged event in. Replaying
//! the same log always yields the same state and the same [`ArenaState::state_hash`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ArenaError, Result};
use crate::ingest::{Catalog, Event, LoggedEvent, ScheduleBatch};
use crate::model::{Dimension, Track, VoteChoice, VoteSource};
use crate::rating::{replay_leaderboard, BothBadPolicy, EloTable};
use crate::scheduler::{pair_generators, BattlePair, Pack, Session};
use crate::validation::{
    validate_scores, validate_votes, RecordedScore, RecordedVote, ScoreValidation, ScoreValidationConfig,
    Thresholds, ValidatedVote, VoteValidation,
};

/// Leaderboards are kept apart per vote source and per track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BoardKey {
    pub source: VoteSource,
    pub track: Track,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArenaState {
    pub catalog: Catalog,
    pub pairs: BTreeMap<String, BattlePair>,
    pub packs: BTreeMap<String, Pack>,
    pub gold_keys: BTreeMap<String, [VoteChoice; 5]>,
    pub sessions: BTreeMap<String, Session>,
    pub votes: Vec<RecordedVote>,
    pub scores: Vec<RecordedScore>,
    /// Raw-vote Elo tables updated as votes arrive.
    pub live: BTreeMap<BoardKey, EloTable>,
    pub policy: BothBadPolicy,
    pub last_seq: u64,
    /// Bumped on every accepted vote.
    pub leaderboard_version: u64,
}

impl ArenaState {
    pub fn new(policy: BothBadPolicy) -> Self {
        ArenaState { policy, ..ArenaState::default() }
    }

    pub fn replay(events: &[LoggedEvent], policy: BothBadPolicy) -> Result<Self> {
        let mut s = ArenaState::new(policy);
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn track_of(&self, pair: &BattlePair) -> Result<Track> {
        let (l, _) = pair_generators(pair, &self.catalog)?;
        Ok(self.catalog.generator(l)?.track)
    }

    fn known_pair(&self, pair_id: &str) -> Result<&BattlePair> {
        self.pairs.get(pair_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "pair",
            ids: vec![pair_id.to_string()],
        })
    }

    /// Whether `event` may be appended now. Never mutates.
    pub fn check(&self, event: &Event) -> Result<()> {
        event.validate()?;
        match event {
            Event::Vote(v) => {
                let pair = self.known_pair(&v.pair_id)?;
                let (l, r) = pair_generators(pair, &self.catalog)?;
                if l == r {
                    return Err(ArenaError::invalid("pair_id", "both sides come from one generator"));
                }
            }
            Event::Score(s) => {
                self.catalog.asset(&s.asset_id)?;
            }
            Event::Catalog(c) => self.catalog.check(c)?,
            Event::Schedule(batch) => self.check_schedule(batch)?,
            Event::Gold(g) => {
                self.known_pair(&g.pair_id)?;
            }
            Event::SessionOpened(spec) => {
                if self.sessions.contains_key(&spec.session_id) {
                    return Err(ArenaError::Duplicate { kind: "session", id: spec.session_id.clone() });
                }
                let unknown: Vec<String> =
                    spec.pair_ids.iter().filter(|p| !self.pairs.contains_key(*p)).cloned().collect();
                if !unknown.is_empty() {
                    return Err(ArenaError::UnknownIds { kind: "pair", ids: unknown });
                }
                if let Some(pk) = &spec.pack_id {
                    if !self.packs.contains_key(pk) {
                        return Err(ArenaError::UnknownIds { kind: "pack", ids: vec![pk.clone()] });
                    }
                }
            }
        }
        Ok(())
    }

    fn check_schedule(&self, batch: &ScheduleBatch) -> Result<()> {
        let mut new_pairs = BTreeSet::new();
        for p in &batch.pairs {
            if self.pairs.contains_key(&p.pair_id) || !new_pairs.insert(p.pair_id.as_str()) {
                return Err(ArenaError::Duplicate { kind: "pair", id: p.pair_id.clone() });
            }
            self.catalog.prompt(&p.prompt_id)?;
            for a in [&p.left_asset_id, &p.right_asset_id] {
                if self.catalog.asset(a)?.prompt_id != p.prompt_id {
                    return Err(ArenaError::invalid(
                        "pair",
                        format!("asset '{a}' of pair '{}' belongs to another prompt", p.pair_id),
                    ));
                }
            }
        }
        let mut new_packs = BTreeSet::new();
        for pk in &batch.packs {
            if self.packs.contains_key(&pk.pack_id) || !new_packs.insert(pk.pack_id.as_str()) {
                return Err(ArenaError::Duplicate { kind: "pack", id: pk.pack_id.clone() });
            }
            let unknown: Vec<String> = pk
                .pair_ids
                .iter()
                .chain(&pk.gold_pair_ids)
                .filter(|id| !new_pairs.contains(id.as_str()) && !self.pairs.contains_key(*id))
                .cloned()
                .collect();
            if !unknown.is_empty() {
                return Err(ArenaError::UnknownIds { kind: "pair", ids: unknown });
            }
        }
        Ok(())
    }

    /// Folds one logged event in. Sequence numbers must increase by one.
    pub fn apply(&mut self, logged: &LoggedEvent) -> Result<()> {
        if logged.seq_no != self.last_seq + 1 {
            return Err(ArenaError::Mismatch(format!(
                "expected seq {} but got {}",
                self.last_seq + 1,
                logged.seq_no
            )));
        }
        self.check(&logged.event)?;
        match &logged.event {
            Event::Vote(v) => {
                let pair = &self.pairs[&v.pair_id];
                let track = self.track_of(pair)?;
                let (l, r) = pair_generators(pair, &self.catalog)?;
                let (l, r) = (l.to_string(), r.to_string());
                let key = BoardKey { source: v.source, track };
                if !self.live.contains_key(&key) {
                    let gens = crate::rating::track_generators(&self.catalog, track);
                    self.live.insert(key, EloTable::with_generators(gens));
                }
                self.live.get_mut(&key).unwrap().apply_vote(&l, &r, &v.choice_array(), self.policy)?;
                for s in self.sessions.values_mut() {
                    if s.spec.annotator_id == v.annotator_id && s.spec.source == v.source {
                        s.record_vote(&v.pair_id);
                    }
                }
                self.votes.push(RecordedVote { seq_no: logged.seq_no, vote: v.clone() });
                self.leaderboard_version += 1;
            }
            Event::Score(s) => {
                self.scores.push(RecordedScore { seq_no: logged.seq_no, score: s.clone() });
            }
            Event::Catalog(c) => {
                self.catalog.apply(c.clone())?;
                if let crate::ingest::CatalogChange::AddGenerator(g) = c {
                    for (key, table) in self.live.iter_mut() {
                        if key.track == g.track {
                            table.register(g.generator_id.clone());
                        }
                    }
                }
            }
            Event::Schedule(batch) => {
                for p in &batch.pairs {
                    self.pairs.insert(p.pair_id.clone(), p.clone());
                }
                for pk in &batch.packs {
                    self.packs.insert(pk.pack_id.clone(), pk.clone());
                }
            }
            Event::Gold(g) => {
                let arr = Dimension::ALL.map(|d| g.choices[&d]);
                self.gold_keys.insert(g.pair_id.clone(), arr);
            }
            Event::SessionOpened(spec) => {
                self.sessions.insert(spec.session_id.clone(), Session::new(spec.clone()));
            }
        }
        self.last_seq = logged.seq_no;
        Ok(())
    }

    /// SHA-256 over a canonical serialization of everything derived from the log.
    pub fn state_hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |label: &str, bytes: Vec<u8>| {
            h.update(label.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        };
        feed("seq", self.last_seq.to_le_bytes().to_vec());
        feed("catalog", json(&self.catalog.to_manifest()));
        feed("pairs", json(&self.pairs));
        feed("packs", json(&self.packs));
        feed("gold", json(&self.gold_keys));
        feed("sessions", json(&self.sessions));
        feed("votes", json(&self.votes));
        feed("scores", json(&self.scores));
        let live: Vec<(&BoardKey, &EloTable)> = self.live.iter().collect();
        feed("live", json(&live));
        feed("version", self.leaderboard_version.to_le_bytes().to_vec());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn live_table(&self, key: BoardKey) -> EloTable {
        self.live.get(&key).cloned().unwrap_or_else(|| {
            EloTable::with_generators(crate::rating::track_generators(&self.catalog, key.track))
        })
    }

    /// Raw votes of one board, as rating input.
    pub fn board_votes(&self, key: BoardKey) -> Result<Vec<ValidatedVote>> {
        let mut out = Vec::new();
        for v in &self.votes {
            if v.vote.source == key.source && self.track_of(&self.pairs[&v.vote.pair_id])? == key.track {
                out.push(ValidatedVote::from_raw(v));
            }
        }
        Ok(out)
    }

    /// Recomputes every live table from scratch and compares exactly.
    pub fn verify_leaderboards(&self) -> Result<usize> {
        for (key, table) in &self.live {
            let gens = crate::rating::track_generators(&self.catalog, key.track);
            let full = replay_leaderboard(&self.board_votes(*key)?, &self.pairs, &self.catalog, &gens, self.policy)?;
            if &full != table {
                return Err(ArenaError::Mismatch(format!(
                    "incremental leaderboard for {:?}/{:?} differs from a full replay",
                    key.source, key.track
                )));
            }
        }
        Ok(self.live.len())
    }

    pub fn validate_votes(&self, thresholds: &Thresholds) -> Result<VoteValidation> {
        validate_votes(&self.votes, &self.pairs, &self.packs, &self.gold_keys, thresholds)
    }

    pub fn validate_scores(
        &self,
        gold_scores: &BTreeMap<String, BTreeMap<Dimension, i32>>,
        config: &ScoreValidationConfig,
    ) -> Result<ScoreValidation> {
        validate_scores(&self.scores, gold_scores, config)
    }

    /// Elo over cleaned votes of one board.
    pub fn validated_table(&self, key: BoardKey, validation: &VoteValidation) -> Result<EloTable> {
        let mut votes = Vec::new();
        for v in &validation.valid_votes {
            if v.source == key.source && self.track_of(&self.pairs[&v.pair_id])? == key.track {
                votes.push(v.clone());
            }
        }
        let gens = crate::rating::track_generators(&self.catalog, key.track);
        replay_leaderboard(&votes, &self.pairs, &self.catalog, &gens, self.policy)
    }

    pub fn display_names(&self) -> BTreeMap<String, String> {
        self.catalog
            .generators
            .values()
            .map(|g| (g.generator_id.clone(), g.display_name.clone()))
            .collect()
    }
}

fn json<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    serde_json::to_vec(v).expect("state serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CatalogChange, EventLog, SyncPolicy};
    use crate::model::{Asset, ComparisonVote, Generator, Modality, PromptSpec, Scenario, Split, ViewKind};
    use crate::scheduler::{build_packs, pack_session, sample_battles};

    pub(crate) fn catalog_events(n_prompts: usize, n_gens: usize) -> Vec<Event> {
        let mut ev = Vec::new();
        for g in 0..n_gens {
            ev.push(Event::Catalog(CatalogChange::AddGenerator(Generator {
                generator_id: format!("g{g}"),
                display_name: format!("Gen {g}"),
                track: Track::TextTo3d,
            })));
        }
        for p in 0..n_prompts {
            ev.push(Event::Catalog(CatalogChange::AddPrompt(PromptSpec {
                prompt_id: format!("p{p}"),
                modality: Modality::Text,
                content_ref: format!("a chair number {p}"),
                subject: "furniture".into(),
                scenario: Scenario::SingleObject,
                split: Split::Train,
            })));
            for g in 0..n_gens {
                ev.push(Event::Catalog(CatalogChange::AddAsset(Asset {
                    asset_id: format!("a{p}-{g}"),
                    prompt_id: format!("p{p}"),
                    generator_id: format!("g{g}"),
                    render_refs: ViewKind::ALL.iter().map(|v| (*v, format!("r/{p}/{g}/{}.mp4", v.as_str()))).collect(),
                    embedding_ref: None,
                })));
            }
        }
        ev
    }

    fn logged(events: Vec<Event>) -> Vec<LoggedEvent> {
        events.into_iter().enumerate().map(|(i, event)| LoggedEvent { seq_no: i as u64 + 1, event }).collect()
    }

    #[test]
    fn fold_tracks_votes_and_sessions() {
        let mut ev = catalog_events(4, 3);
        let mut s = ArenaState::replay(&logged(ev.clone()), BothBadPolicy::Draw).unwrap();
        let pairs = sample_battles(&s.catalog, 12, 1).unwrap();
        let sched = build_packs(pairs, 6, 0.5, 0.0, 1).unwrap();
        ev.push(Event::Schedule(ScheduleBatch { pairs: sched.pairs.clone(), packs: sched.packs.clone() }));
        s = ArenaState::replay(&logged(ev.clone()), BothBadPolicy::Draw).unwrap();
        let spec = pack_session(&s.packs, "pack-0001", "sess-1", "alice").unwrap();
        ev.push(Event::SessionOpened(spec.clone()));
        ev.push(Event::Vote(ComparisonVote::new(
            spec.pair_ids[0].clone(),
            "alice",
            [VoteChoice::LeftBetter; 5],
            1,
            VoteSource::ExpertPack,
        )));
        let s = ArenaState::replay(&logged(ev.clone()), BothBadPolicy::Draw).unwrap();
        assert_eq!(s.sessions["sess-1"].cursor(), Some(1));
        assert_eq!(s.leaderboard_version, 1);
        let key = BoardKey { source: VoteSource::ExpertPack, track: Track::TextTo3d };
        assert_eq!(s.live[&key].ratings.len(), 3);
        assert!((s.live[&key].sum(Dimension::GeoDetails) - 3000.0).abs() < 1e-9);
        assert_eq!(s.verify_leaderboards().unwrap(), 1);
        let again = ArenaState::replay(&logged(ev), BothBadPolicy::Draw).unwrap();
        assert_eq!(again.state_hash(), s.state_hash());
    }

    #[test]
    fn check_rejects_unknown_and_duplicate() {
        let s = ArenaState::replay(&logged(catalog_events(1, 2)), BothBadPolicy::Draw).unwrap();
        let vote = Event::Vote(ComparisonVote::new("nope", "a", [VoteChoice::Tie; 5], 0, VoteSource::Arena));
        assert!(matches!(s.check(&vote), Err(ArenaError::UnknownIds { .. })));
        let dup = catalog_events(1, 1).remove(0);
        assert!(matches!(s.check(&dup), Err(ArenaError::Duplicate { .. })));
        let mut bad = ArenaState::default();
        let gap = LoggedEvent { seq_no: 2, event: catalog_events(1, 1).remove(0) };
        assert!(bad.apply(&gap).is_err());
    }

    #[test]
    fn log_round_trip_matches_in_memory_fold() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.log");
        let (mut log, _, _) = EventLog::open(&path, SyncPolicy::Never).unwrap();
        let mut mem = ArenaState::default();
        for e in catalog_events(2, 3) {
            mem.check(&e).unwrap();
            let seq = log.append(&e).unwrap();
            mem.apply(&LoggedEvent { seq_no: seq, event: e }).unwrap();
        }
        drop(log);
        let (_, events, _) = EventLog::open(&path, SyncPolicy::Never).unwrap();
        let disk = ArenaState::replay(&events, BothBadPolicy::Draw).unwrap();
        assert_eq!(disk.state_hash(), mem.state_hash());
    }
}
