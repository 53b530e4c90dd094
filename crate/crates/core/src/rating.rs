//! Per-dimension Elo leaderboards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::ingest::Catalog;
use crate::model::{Dimension, VoteChoice};
use crate::scheduler::{pair_generators, BattlePair};
use crate::validation::ValidatedVote;

pub const INIT_RATING: f64 = 1000.0;
pub const K_FACTOR: f64 = 32.0;

/// Standard Elo update. `outcome` is the score of `a` and must be 0, 0.5 or 1.
pub fn elo_update(r_a: f64, r_b: f64, outcome: f64, k: f64) -> Result<(f64, f64)> {
    if !(r_a.is_finite() && r_b.is_finite()) {
        return Err(ArenaError::invalid("rating", "ratings must be finite"));
    }
    if outcome != 0.0 && outcome != 0.5 && outcome != 1.0 {
        return Err(ArenaError::invalid("outcome", format!("{outcome} is not one of 0, 0.5, 1")));
    }
    let delta = k * (outcome - expected_score(r_a, r_b));
    Ok((r_a + delta, r_b - delta))
}

pub fn expected_score(r_a: f64, r_b: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((r_b - r_a) / 400.0))
}

/// How a BothBad choice enters the rating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BothBadPolicy {
    #[default]
    Draw,
    Skip,
}

impl std::str::FromStr for BothBadPolicy {
    type Err = ArenaError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "draw" => Ok(BothBadPolicy::Draw),
            "skip" => Ok(BothBadPolicy::Skip),
            _ => Err(ArenaError::invalid("both_bad_policy", format!("unknown policy '{s}'"))),
        }
    }
}

pub fn outcome_for(choice: VoteChoice, policy: BothBadPolicy) -> Option<f64> {
    match (choice, policy) {
        (VoteChoice::BothBad, BothBadPolicy::Skip) => None,
        (c, _) => Some(c.left_outcome()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloTable {
    pub init_rating: f64,
    pub k_factor: f64,
    pub ratings: BTreeMap<String, [f64; 5]>,
    pub games_played: BTreeMap<String, [u64; 5]>,
    pub both_bad: BTreeMap<String, [u64; 5]>,
}

impl Default for EloTable {
    fn default() -> Self {
        EloTable::new(INIT_RATING, K_FACTOR)
    }
}

impl EloTable {
    pub fn new(init_rating: f64, k_factor: f64) -> Self {
        EloTable {
            init_rating,
            k_factor,
            ratings: BTreeMap::new(),
            games_played: BTreeMap::new(),
            both_bad: BTreeMap::new(),
        }
    }

    pub fn with_generators<I, S>(generators: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut t = EloTable::default();
        for g in generators {
            t.register(g.into());
        }
        t
    }

    pub fn register(&mut self, generator_id: String) {
        let init = self.init_rating;
        self.games_played.entry(generator_id.clone()).or_insert([0; 5]);
        self.both_bad.entry(generator_id.clone()).or_insert([0; 5]);
        self.ratings.entry(generator_id).or_insert([init; 5]);
    }

    pub fn rating(&self, generator_id: &str, d: Dimension) -> Option<f64> {
        self.ratings.get(generator_id).map(|r| r[d.index()])
    }

    pub fn average(&self, generator_id: &str) -> Option<f64> {
        self.ratings
            .get(generator_id)
            .map(|r| r.iter().sum::<f64>() / Dimension::COUNT as f64)
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    /// Applies one update on a single dimension; both generators are registered on demand.
    pub fn update(&mut self, left: &str, right: &str, d: Dimension, outcome: f64) -> Result<()> {
        if left == right {
            return Err(ArenaError::invalid("pair", format!("generator '{left}' cannot play itself")));
        }
        for g in [left, right] {
            if !self.ratings.contains_key(g) {
                self.register(g.to_string());
            }
        }
        let i = d.index();
        let (a, b) = elo_update(self.ratings[left][i], self.ratings[right][i], outcome, self.k_factor)?;
        self.ratings.get_mut(left).unwrap()[i] = a;
        self.ratings.get_mut(right).unwrap()[i] = b;
        self.games_played.get_mut(left).unwrap()[i] += 1;
        self.games_played.get_mut(right).unwrap()[i] += 1;
        Ok(())
    }

    /// Applies a five-dimension vote between two generators.
    pub fn apply_vote(
        &mut self,
        left: &str,
        right: &str,
        choices: &[VoteChoice; 5],
        policy: BothBadPolicy,
    ) -> Result<()> {
        for (d, &c) in Dimension::ALL.iter().zip(choices) {
            if c == VoteChoice::BothBad {
                for g in [left, right] {
                    if !self.ratings.contains_key(g) {
                        self.register(g.to_string());
                    }
                    self.both_bad.get_mut(g).unwrap()[d.index()] += 1;
                }
            }
            if let Some(o) = outcome_for(c, policy) {
                self.update(left, right, *d, o)?;
            }
        }
        Ok(())
    }

    pub fn sum(&self, d: Dimension) -> f64 {
        self.ratings.values().map(|r| r[d.index()]).sum()
    }
}

/// Single pass over the votes in sequence order. Every generator in `generators`
/// starts at the initial rating even if it never plays.
pub fn replay_leaderboard(
    votes: &[ValidatedVote],
    pairs: &BTreeMap<String, BattlePair>,
    catalog: &Catalog,
    generators: &[String],
    policy: BothBadPolicy,
) -> Result<EloTable> {
    let mut table = EloTable::with_generators(generators.iter().cloned());
    let mut ordered: Vec<&ValidatedVote> = votes.iter().collect();
    ordered.sort_by_key(|v| v.seq_no);
    for v in ordered {
        let pair = pairs.get(&v.pair_id).ok_or_else(|| ArenaError::UnknownIds {
            kind: "pair",
            ids: vec![v.pair_id.clone()],
        })?;
        let (l, r) = pair_generators(pair, catalog)?;
        table.apply_vote(l, r, &v.choices, policy)?;
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankBy {
    Dimension(Dimension),
    Average,
}

impl std::str::FromStr for RankBy {
    type Err = ArenaError;
    fn from_str(s: &str) -> Result<Self> {
        if s == "average" {
            Ok(RankBy::Average)
        } else {
            s.parse().map(RankBy::Dimension)
        }
    }
}

/// Descending by rating, ties broken by generator id.
pub fn rank_from_table(table: &EloTable, by: RankBy) -> Vec<String> {
    rank_ratings(table.ratings.iter().map(|(g, r)| {
        let v = match by {
            RankBy::Dimension(d) => r[d.index()],
            RankBy::Average => r.iter().sum::<f64>() / Dimension::COUNT as f64,
        };
        (g.as_str(), v)
    }))
}

/// Ranks arbitrary `(id, value)` pairs with the same rule as [`rank_from_table`].
pub fn rank_ratings<'a>(items: impl IntoIterator<Item = (&'a str, f64)>) -> Vec<String> {
    let mut v: Vec<(&str, f64)> = items.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(g, _)| g.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub rank: usize,
    pub generator_id: String,
    pub display_name: String,
    pub ratings: BTreeMap<Dimension, f64>,
    pub average: f64,
    pub games_played: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub ranked_by: RankBy,
    pub rows: Vec<LeaderboardRow>,
}

impl Leaderboard {
    pub fn from_table(
        table: &EloTable,
        by: RankBy,
        names: &BTreeMap<String, String>,
    ) -> Leaderboard {
        let rows = rank_from_table(table, by)
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let r = table.ratings[&g];
                LeaderboardRow {
                    rank: i + 1,
                    display_name: names.get(&g).cloned().unwrap_or_else(|| g.clone()),
                    ratings: Dimension::ALL.into_iter().zip(r).collect(),
                    average: table.average(&g).unwrap(),
                    games_played: table.games_played[&g].iter().sum::<u64>()
                        / Dimension::COUNT as u64,
                    generator_id: g,
                }
            })
            .collect();
        Leaderboard { ranked_by: by, rows }
    }

    /// Text table: method, five dimension columns, average.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.rows.iter().map(|r| r.display_name.len()).max().unwrap_or(0).max(6);
        let _ = write!(out, "{:<width$}", "Method");
        for d in Dimension::ALL {
            let _ = write!(out, " | {:>12}", d.label());
        }
        let _ = writeln!(out, " | {:>12}", "Average");
        for row in &self.rows {
            let _ = write!(out, "{:<width$}", row.display_name);
            for d in Dimension::ALL {
                let _ = write!(out, " | {:>12.2}", row.ratings[&d]);
            }
            let _ = writeln!(out, " | {:>12.2}", row.average);
        }
        out
    }
}

/// Generators of one track, for seeding a table.
pub fn track_generators(catalog: &Catalog, track: crate::model::Track) -> Vec<String> {
    let ids: BTreeSet<&String> = catalog
        .generators
        .values()
        .filter(|g| g.track == track)
        .map(|g| &g.generator_id)
        .collect();
    ids.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VoteChoice::*;
    use proptest::prelude::*;

    #[test]
    fn update_examples() {
        assert_eq!(elo_update(1000.0, 1000.0, 1.0, 32.0).unwrap(), (1016.0, 984.0));
        assert_eq!(elo_update(1000.0, 1000.0, 0.5, 32.0).unwrap(), (1000.0, 1000.0));
        let (a, b) = elo_update(1200.0, 1000.0, 1.0, 32.0).unwrap();
        assert!((a - 1207.69).abs() < 0.01 && (b - 992.31).abs() < 0.01);
        assert!(elo_update(1000.0, 1000.0, 0.7, 32.0).is_err());
        assert!(elo_update(f64::NAN, 1000.0, 1.0, 32.0).is_err());
    }

    #[test]
    fn ten_wins_one_dimension() {
        let mut t = EloTable::with_generators(["A", "B"]);
        for _ in 0..10 {
            t.update("A", "B", Dimension::TexQuality, 1.0).unwrap();
        }
        let a = t.rating("A", Dimension::TexQuality).unwrap();
        let b = t.rating("B", Dimension::TexQuality).unwrap();
        assert!(a > 1000.0 && b < 1000.0);
        assert!((a + b - 2000.0).abs() < 1e-9);
        assert_eq!(t.rating("A", Dimension::GeoDetails), Some(1000.0));
    }

    #[test]
    fn both_bad_policies() {
        let mut draw = EloTable::with_generators(["A", "B"]);
        draw.update("A", "B", Dimension::GeoDetails, 1.0).unwrap();
        let mut skip = draw.clone();
        draw.apply_vote("A", "B", &[BothBad; 5], BothBadPolicy::Draw).unwrap();
        skip.apply_vote("A", "B", &[BothBad; 5], BothBadPolicy::Skip).unwrap();
        assert!(draw.rating("A", Dimension::GeoDetails) < skip.rating("A", Dimension::GeoDetails));
        assert_eq!(skip.both_bad["A"], [1; 5]);
        assert_eq!(skip.games_played["A"], [0, 1, 0, 0, 0]);
        assert_eq!(draw.games_played["A"], [1, 2, 1, 1, 1]);
    }

    #[test]
    fn rank_examples() {
        let t = EloTable {
            ratings: [("A", 1177.66), ("B", 1122.21), ("C", 1088.93)]
                .into_iter()
                .map(|(g, r)| (g.to_string(), [r; 5]))
                .collect(),
            ..EloTable::default()
        };
        assert_eq!(rank_from_table(&t, RankBy::Average), ["A", "B", "C"]);
        let eq = EloTable::with_generators(["c", "a", "b"]);
        assert_eq!(rank_from_table(&eq, RankBy::Average), ["a", "b", "c"]);
        let rev = rank_ratings([("C", 1088.93), ("B", 1122.21), ("A", 1177.66)]);
        assert_eq!(rev, ["A", "B", "C"]);
    }

    #[test]
    fn export_has_five_dimensions_and_average() {
        let mut t = EloTable::with_generators(["g1", "g2"]);
        t.apply_vote("g1", "g2", &[LeftBetter; 5], BothBadPolicy::Draw).unwrap();
        let names = [("g1".to_string(), "First".to_string())].into_iter().collect();
        let lb = Leaderboard::from_table(&t, RankBy::Average, &names);
        let text = lb.to_text();
        let header = text.lines().next().unwrap();
        for col in ["Method", "Plausibility", "Geo. Details", "Tex. Quality", "Geo-Tex.", "Alignment", "Average"] {
            assert!(header.contains(col), "{col}");
        }
        assert!(text.lines().nth(1).unwrap().starts_with("First"));
        assert_eq!(lb.rows[1].display_name, "g2");
    }

    proptest! {
        #[test]
        fn zero_sum_and_monotone(
            ops in prop::collection::vec((0usize..4, 0usize..4, 0usize..5, 0u8..3), 1..300)
        ) {
            let gens = ["a", "b", "c", "d"];
            let mut t = EloTable::with_generators(gens);
            for (l, r, d, o) in ops {
                if l == r { continue; }
                let d = Dimension::ALL[d];
                let before = t.rating(gens[l], d).unwrap();
                let outcome = f64::from(o) / 2.0;
                t.update(gens[l], gens[r], d, outcome).unwrap();
                if o == 2 {
                    prop_assert!(t.rating(gens[l], d).unwrap() >= before);
                }
            }
            for d in Dimension::ALL {
                prop_assert!((t.sum(d) - 4000.0).abs() < 1e-9);
            }
        }
    }
}
