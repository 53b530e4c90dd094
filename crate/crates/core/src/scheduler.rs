//! Battle sampling, annotation packs and annotator sessions.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};
use crate::ingest::Catalog;
use crate::model::{Modality, ViewKind, VoteSource};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BattlePair {
    pub pair_id: String,
    pub prompt_id: String,
    pub left_asset_id: String,
    pub right_asset_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack_id: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackFlags {
    pub is_cross_annotation: bool,
    /// Last pack of a schedule whose pair count is not a multiple of the pack size.
    #[serde(default)]
    pub is_short: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pack {
    pub pack_id: String,
    pub pair_ids: Vec<String>,
    pub flags: PackFlags,
    #[serde(default)]
    pub gold_pair_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub pairs: Vec<BattlePair>,
    pub packs: Vec<Pack>,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `ceil` that ignores floating-point fuzz just above an integer.
fn ceil_count(x: f64) -> usize {
    (x - 1e-9).ceil().max(0.0) as usize
}

/// Unordered generator pair -> prompts where both generators have a
/// battle-ready asset.
fn eligible_prompts(catalog: &Catalog) -> BTreeMap<(String, String), Vec<String>> {
    let mut out: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
    for (prompt_id, assets) in catalog.assets_by_prompt() {
        let mut gens: Vec<&str> = assets
            .iter()
            .filter(|a| a.is_complete())
            .map(|a| a.generator_id.as_str())
            .collect();
        gens.sort_unstable();
        for i in 0..gens.len() {
            for j in i + 1..gens.len() {
                out.entry((gens[i].to_string(), gens[j].to_string()))
                    .or_default()
                    .push(prompt_id.to_string());
            }
        }
    }
    out
}

/// Number of distinct (prompt, unordered generator pair) battles the catalog supports.
pub fn battle_capacity(catalog: &Catalog) -> usize {
    eligible_prompts(catalog).values().map(Vec::len).sum()
}

/// Samples `n_pairs` distinct battles.
///
/// Generator pairs are visited round-robin in a seeded shuffled order; each
/// generator pair draws prompts from its own shuffled list, so coverage counts
/// differ by at most one across generator pairs. Slot order is randomized per
/// battle with a balanced draw inside each generator pair, which keeps the
/// marginal left/right probability at one half for every battle.
pub fn sample_battles(catalog: &Catalog, n_pairs: usize, seed: u64) -> Result<Vec<BattlePair>> {
    let eligible = eligible_prompts(catalog);
    let max: usize = eligible.values().map(Vec::len).sum();
    if n_pairs > max {
        return Err(ArenaError::Capacity {
            requested: n_pairs,
            max,
        });
    }
    let mut rng = rng_for(seed, 0);
    let mut groups: Vec<((String, String), Vec<String>)> = eligible.into_iter().collect();
    groups.shuffle(&mut rng);
    for (_, prompts) in groups.iter_mut() {
        prompts.shuffle(&mut rng);
    }

    // Round-robin selection: (group index, prompt index) in draw order.
    let mut picks: Vec<(usize, usize)> = Vec::with_capacity(n_pairs);
    let mut round = 0;
    while picks.len() < n_pairs {
        for (g, (_, prompts)) in groups.iter().enumerate() {
            if picks.len() == n_pairs {
                break;
            }
            if round < prompts.len() {
                picks.push((g, round));
            }
        }
        round += 1;
    }

    let mut per_group = vec![0usize; groups.len()];
    for &(g, _) in &picks {
        per_group[g] += 1;
    }
    let mut flips: Vec<Vec<bool>> = per_group
        .iter()
        .map(|&c| {
            let mut f: Vec<bool> = (0..c).map(|i| i < c / 2).collect();
            if c % 2 == 1 {
                f[c - 1] = rng.gen_bool(0.5);
            }
            f.shuffle(&mut rng);
            f
        })
        .collect();

    let mut pairs = Vec::with_capacity(n_pairs);
    for (i, &(g, k)) in picks.iter().enumerate() {
        let ((ga, gb), prompts) = &groups[g];
        let prompt_id = &prompts[k];
        let a = catalog.asset_for(prompt_id, ga).expect("eligible asset");
        let b = catalog.asset_for(prompt_id, gb).expect("eligible asset");
        let swap = flips[g].pop().expect("one flip per pick");
        let (left, right) = if swap { (b, a) } else { (a, b) };
        pairs.push(BattlePair {
            pair_id: format!("s{seed:x}-{:06}", i + 1),
            prompt_id: prompt_id.clone(),
            left_asset_id: left.asset_id.clone(),
            right_asset_id: right.asset_id.clone(),
            pack_id: None,
        });
    }
    Ok(pairs)
}

/// Bundles pairs into packs and designates cross-annotation packs and gold
/// pairs. The last pack may be short; it is flagged.
pub fn build_packs(
    pairs: Vec<BattlePair>,
    pack_size: usize,
    cross_fraction: f64,
    gold_fraction: f64,
    seed: u64,
) -> Result<Schedule> {
    if pack_size == 0 {
        return Err(ArenaError::Config("pack size must be positive".into()));
    }
    for (name, f) in [("cross_fraction", cross_fraction), ("gold_fraction", gold_fraction)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(ArenaError::Config(format!("{name} {f} outside [0, 1]")));
        }
    }
    let mut rng = rng_for(seed, 1);
    let mut pairs = pairs;
    pairs.shuffle(&mut rng);

    let n_packs = pairs.len().div_ceil(pack_size);
    let mut packs: Vec<Pack> = pairs
        .chunks_mut(pack_size)
        .enumerate()
        .map(|(i, chunk)| {
            let pack_id = format!("pack-{:04}", i + 1);
            for p in chunk.iter_mut() {
                p.pack_id = Some(pack_id.clone());
            }
            Pack {
                pack_id,
                pair_ids: chunk.iter().map(|p| p.pair_id.clone()).collect(),
                flags: PackFlags {
                    is_cross_annotation: false,
                    is_short: chunk.len() < pack_size,
                },
                gold_pair_ids: Vec::new(),
            }
        })
        .collect();

    let n_cross = ceil_count(cross_fraction * n_packs as f64).min(n_packs);
    let mut order: Vec<usize> = (0..n_packs).collect();
    order.shuffle(&mut rng);
    for &i in &order[..n_cross] {
        packs[i].flags.is_cross_annotation = true;
    }

    let n_gold = ceil_count(gold_fraction * pairs.len() as f64).min(pairs.len());
    let quotas = spread_quota(n_gold, &packs, &mut rng);
    for (pack, quota) in packs.iter_mut().zip(quotas) {
        let mut idx: Vec<usize> = (0..pack.pair_ids.len()).collect();
        idx.shuffle(&mut rng);
        let mut chosen = idx[..quota].to_vec();
        chosen.sort_unstable();
        pack.gold_pair_ids = chosen.into_iter().map(|i| pack.pair_ids[i].clone()).collect();
    }

    Ok(Schedule { pairs, packs })
}

/// Per-pack gold counts that sum to `total` and differ by at most one wherever
/// pack capacity allows.
fn spread_quota(total: usize, packs: &[Pack], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = packs.len();
    if n == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut quotas = vec![0usize; n];
    let mut remaining = total;
    // Fill level by level, visiting packs in a random order within a level.
    while remaining > 0 {
        let mut progressed = false;
        for &i in &order {
            if remaining == 0 {
                break;
            }
            if quotas[i] < packs[i].pair_ids.len() {
                quotas[i] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    quotas
}

/// Where an annotation session draws its pairs from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSpec {
    pub session_id: String,
    pub annotator_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pack_id: Option<String>,
    pub pair_ids: Vec<String>,
    pub source: VoteSource,
}

/// Session opened on a pack. Both annotators of a cross-annotation pack get
/// the same pair list; their votes stay separate records.
pub fn pack_session(
    schedule_packs: &BTreeMap<String, Pack>,
    pack_id: &str,
    session_id: impl Into<String>,
    annotator_id: impl Into<String>,
) -> Result<SessionSpec> {
    let pack = schedule_packs.get(pack_id).ok_or_else(|| ArenaError::UnknownIds {
        kind: "pack",
        ids: vec![pack_id.to_string()],
    })?;
    Ok(SessionSpec {
        session_id: session_id.into(),
        annotator_id: annotator_id.into(),
        pack_id: Some(pack.pack_id.clone()),
        pair_ids: pack.pair_ids.clone(),
        source: VoteSource::ExpertPack,
    })
}

/// Live progress of a session; the cursor only moves past a pair once a
/// complete vote for it has been recorded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub spec: SessionSpec,
    pub completed: BTreeSet<String>,
}

impl Session {
    pub fn new(spec: SessionSpec) -> Self {
        Session {
            spec,
            completed: BTreeSet::new(),
        }
    }

    pub fn cursor(&self) -> Option<usize> {
        self.spec
            .pair_ids
            .iter()
            .position(|p| !self.completed.contains(p))
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.spec.pair_ids.iter().any(|p| p == pair_id)
    }

    pub fn record_vote(&mut self, pair_id: &str) {
        if self.contains(pair_id) {
            self.completed.insert(pair_id.to_string());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// Opaque URL for one render of one side of a battle. It names the battle
/// slot, never the asset, so it carries no generator identity.
pub fn render_handle(pair_id: &str, side: Side, view: ViewKind) -> String {
    format!("/v1/renders/{pair_id}/{}/{}", side.as_str(), view.as_str())
}

pub fn prompt_image_handle(pair_id: &str) -> String {
    format!("/v1/renders/{pair_id}/prompt")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptView {
    pub modality: Modality,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

/// What an annotator sees before voting. Contains no generator or asset ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizedBattle {
    pub session_id: String,
    pub pair_id: String,
    pub position: usize,
    pub total: usize,
    pub prompt: PromptView,
    pub left_renders: BTreeMap<ViewKind, String>,
    pub right_renders: BTreeMap<ViewKind, String>,
}

pub fn next_battle(
    session: &Session,
    catalog: &Catalog,
    pairs: &BTreeMap<String, BattlePair>,
) -> Result<AnonymizedBattle> {
    let idx = session
        .cursor()
        .ok_or_else(|| ArenaError::Exhausted(session.spec.session_id.clone()))?;
    let pair_id = &session.spec.pair_ids[idx];
    let pair = pairs.get(pair_id).ok_or_else(|| ArenaError::UnknownIds {
        kind: "pair",
        ids: vec![pair_id.clone()],
    })?;
    let prompt = catalog.prompt(&pair.prompt_id)?;
    let prompt = match prompt.modality {
        Modality::Text => PromptView {
            modality: Modality::Text,
            text: Some(prompt.content_ref.clone()),
            image: None,
        },
        Modality::Image => PromptView {
            modality: Modality::Image,
            text: None,
            image: Some(prompt_image_handle(pair_id)),
        },
    };
    let renders = |side| {
        ViewKind::ALL
            .iter()
            .map(|&v| (v, render_handle(pair_id, side, v)))
            .collect()
    };
    Ok(AnonymizedBattle {
        session_id: session.spec.session_id.clone(),
        pair_id: pair_id.clone(),
        position: idx + 1,
        total: session.spec.pair_ids.len(),
        prompt,
        left_renders: renders(Side::Left),
        right_renders: renders(Side::Right),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevealedGenerator {
    pub generator_id: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub pair_id: String,
    pub left: RevealedGenerator,
    pub right: RevealedGenerator,
}

/// Generator ids behind a battle's left and right slots.
pub fn pair_generators<'a>(pair: &BattlePair, catalog: &'a Catalog) -> Result<(&'a str, &'a str)> {
    let l = catalog.asset(&pair.left_asset_id)?;
    let r = catalog.asset(&pair.right_asset_id)?;
    Ok((l.generator_id.as_str(), r.generator_id.as_str()))
}

/// Identities behind a battle, available only once this session has
/// submitted a complete vote on it.
pub fn reveal(
    session: &Session,
    pair_id: &str,
    catalog: &Catalog,
    pairs: &BTreeMap<String, BattlePair>,
) -> Result<Reveal> {
    if !session.completed.contains(pair_id) {
        return Err(ArenaError::Denied(format!(
            "identities for pair '{pair_id}' are hidden until a complete vote is submitted"
        )));
    }
    let pair = pairs.get(pair_id).ok_or_else(|| ArenaError::UnknownIds {
        kind: "pair",
        ids: vec![pair_id.to_string()],
    })?;
    let (l, r) = pair_generators(pair, catalog)?;
    let view = |id: &str| -> Result<RevealedGenerator> {
        let g = catalog.generator(id)?;
        Ok(RevealedGenerator {
            generator_id: g.generator_id.clone(),
            display_name: g.display_name.clone(),
        })
    };
    Ok(Reveal {
        pair_id: pair_id.to_string(),
        left: view(l)?,
        right: view(r)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedPair {
    pub pair_id: String,
    pub prompt_id: String,
    pub left_asset_id: String,
    pub right_asset_id: String,
    pub gold: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedPack {
    pub pack_id: String,
    pub is_cross_annotation: bool,
    pub is_short: bool,
    pub pairs: Vec<ExportedPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackExport {
    pub version: u32,
    pub packs: Vec<ExportedPack>,
}

/// Pack hand-off document for annotation teams.
pub fn export_packs(schedule: &Schedule) -> PackExport {
    let by_id: BTreeMap<&str, &BattlePair> =
        schedule.pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let packs = schedule
        .packs
        .iter()
        .map(|pack| {
            let gold: BTreeSet<&str> = pack.gold_pair_ids.iter().map(String::as_str).collect();
            ExportedPack {
                pack_id: pack.pack_id.clone(),
                is_cross_annotation: pack.flags.is_cross_annotation,
                is_short: pack.flags.is_short,
                pairs: pack
                    .pair_ids
                    .iter()
                    .filter_map(|id| by_id.get(id.as_str()))
                    .map(|p| ExportedPair {
                        pair_id: p.pair_id.clone(),
                        prompt_id: p.prompt_id.clone(),
                        left_asset_id: p.left_asset_id.clone(),
                        right_asset_id: p.right_asset_id.clone(),
                        gold: gold.contains(p.pair_id.as_str()),
                    })
                    .collect(),
            }
        })
        .collect();
    PackExport { version: 1, packs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Manifest;
    use crate::model::{Asset, Generator, PromptSpec, Scenario, Split, Track};

    pub(crate) fn catalog(n_prompts: usize, n_gens: usize) -> Catalog {
        let prompts = (0..n_prompts)
            .map(|i| PromptSpec {
                prompt_id: format!("p{i:03}"),
                modality: Modality::Text,
                content_ref: format!("prompt {i}"),
                subject: "objects".into(),
                scenario: Scenario::SingleObject,
                split: Split::Train,
            })
            .collect();
        let generators = (0..n_gens)
            .map(|g| Generator {
                generator_id: format!("g{g}"),
                display_name: format!("Gen{g}"),
                track: Track::TextTo3d,
            })
            .collect();
        let mut assets = Vec::new();
        for i in 0..n_prompts {
            for g in 0..n_gens {
                let id = format!("a-{i}-{g}");
                assets.push(Asset {
                    render_refs: ViewKind::ALL
                        .iter()
                        .map(|v| (*v, format!("r/{id}/{}.mp4", v.as_str())))
                        .collect(),
                    asset_id: id,
                    prompt_id: format!("p{i:03}"),
                    generator_id: format!("g{g}"),
                    embedding_ref: None,
                });
            }
        }
        Catalog::from_manifest(Manifest {
            version: 1,
            prompts,
            generators,
            assets,
        })
        .unwrap()
    }

    fn gens(c: &Catalog, p: &BattlePair) -> (String, String) {
        let (a, b) = pair_generators(p, c).unwrap();
        if a < b {
            (a.into(), b.into())
        } else {
            (b.into(), a.into())
        }
    }

    #[test]
    fn exhaustive_single_prompt() {
        let c = catalog(1, 3);
        let pairs = sample_battles(&c, 3, 7).unwrap();
        let set: BTreeSet<_> = pairs.iter().map(|p| gens(&c, p)).collect();
        assert_eq!(set.len(), 3);
        for p in &pairs {
            assert_eq!(p.prompt_id, "p000");
            assert_ne!(gens(&c, p).0, gens(&c, p).1);
        }
        assert!(matches!(
            sample_battles(&c, 4, 7),
            Err(ArenaError::Capacity { requested: 4, max: 3 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let c = catalog(20, 5);
        assert_eq!(sample_battles(&c, 50, 3).unwrap(), sample_battles(&c, 50, 3).unwrap());
        assert_ne!(sample_battles(&c, 50, 3).unwrap(), sample_battles(&c, 50, 4).unwrap());
    }

    #[test]
    fn coverage_balanced() {
        let c = catalog(30, 6);
        for n in [15, 45, 100, 137] {
            let pairs = sample_battles(&c, n, 11).unwrap();
            let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
            for p in &pairs {
                *counts.entry(gens(&c, p)).or_default() += 1;
            }
            let max = counts.values().max().unwrap();
            let min = if counts.len() < 15 { &0 } else { counts.values().min().unwrap() };
            assert!(max - min <= 1, "n={n}: {counts:?}");
            let ids: BTreeSet<_> = pairs.iter().map(|p| (&p.prompt_id, gens(&c, p))).collect();
            assert_eq!(ids.len(), n, "battles must be distinct");
        }
    }

    #[test]
    fn packs_and_cross_flags() {
        let c = catalog(20, 4);
        let pairs = sample_battles(&c, 60, 1).unwrap();
        let s = build_packs(pairs, 30, 0.5, 0.0, 1).unwrap();
        assert_eq!(s.packs.len(), 2);
        assert_eq!(s.packs.iter().filter(|p| p.flags.is_cross_annotation).count(), 1);
        assert!(s.packs.iter().all(|p| p.pair_ids.len() == 30 && !p.flags.is_short));
        assert!(s.pairs.iter().all(|p| p.pack_id.is_some()));
    }

    #[test]
    fn short_final_pack_flagged_and_gold_spread() {
        let c = catalog(30, 5);
        let pairs = sample_battles(&c, 95, 2).unwrap();
        let s = build_packs(pairs, 30, 0.0, 0.1, 2).unwrap();
        assert_eq!(s.packs.len(), 4);
        assert!(s.packs[3].flags.is_short);
        assert_eq!(s.packs[3].pair_ids.len(), 5);
        let gold: Vec<usize> = s.packs.iter().map(|p| p.gold_pair_ids.len()).collect();
        assert_eq!(gold.iter().sum::<usize>(), 10);
        assert!(gold.iter().max().unwrap() - gold.iter().min().unwrap() <= 1, "{gold:?}");
        for p in &s.packs {
            assert!(p.gold_pair_ids.iter().all(|g| p.pair_ids.contains(g)));
        }
        assert!(build_packs(Vec::new(), 30, 1.5, 0.0, 0).is_err());
    }

    #[test]
    fn cross_pack_sessions_share_pairs() {
        let c = catalog(20, 4);
        let s = build_packs(sample_battles(&c, 60, 1).unwrap(), 30, 0.5, 0.0, 1).unwrap();
        let packs: BTreeMap<String, Pack> =
            s.packs.iter().map(|p| (p.pack_id.clone(), p.clone())).collect();
        let cross = s.packs.iter().find(|p| p.flags.is_cross_annotation).unwrap();
        let a = pack_session(&packs, &cross.pack_id, "sa", "A").unwrap();
        let b = pack_session(&packs, &cross.pack_id, "sb", "B").unwrap();
        assert_eq!(a.pair_ids, b.pair_ids);
        assert_ne!(a.annotator_id, b.annotator_id);
    }

    #[test]
    fn anonymity_until_vote() {
        let c = catalog(40, 3);
        let s = build_packs(sample_battles(&c, 30, 5).unwrap(), 30, 0.0, 0.0, 5).unwrap();
        let pairs: BTreeMap<String, BattlePair> =
            s.pairs.iter().map(|p| (p.pair_id.clone(), p.clone())).collect();
        let packs: BTreeMap<String, Pack> =
            s.packs.iter().map(|p| (p.pack_id.clone(), p.clone())).collect();
        let mut session = Session::new(pack_session(&packs, "pack-0001", "s1", "ann").unwrap());

        let battle = next_battle(&session, &c, &pairs).unwrap();
        assert_eq!(battle.position, 1);
        let json = serde_json::to_string(&battle).unwrap();
        for g in c.generators.values() {
            assert!(!json.contains(&g.generator_id) && !json.contains(&g.display_name));
        }
        for a in c.assets.values() {
            assert!(!json.contains(&a.asset_id));
        }
        assert!(matches!(
            reveal(&session, &battle.pair_id, &c, &pairs),
            Err(ArenaError::Denied(_))
        ));
        session.record_vote(&battle.pair_id);
        let r = reveal(&session, &battle.pair_id, &c, &pairs).unwrap();
        assert_ne!(r.left.generator_id, r.right.generator_id);
        assert_eq!(next_battle(&session, &c, &pairs).unwrap().position, 2);

        for p in session.spec.pair_ids.clone() {
            session.record_vote(&p);
        }
        assert!(matches!(next_battle(&session, &c, &pairs), Err(ArenaError::Exhausted(_))));
    }

    #[test]
    fn left_slot_fraction_near_half() {
        let c = catalog(200, 9);
        let pairs = sample_battles(&c, 1200, 99).unwrap();
        let mut left: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for p in &pairs {
            let (l, r) = pair_generators(p, &c).unwrap();
            left.entry(l.into()).or_default().0 += 1;
            left.entry(l.into()).or_default().1 += 1;
            left.entry(r.into()).or_default().1 += 1;
        }
        for (g, (l, total)) in left {
            let frac = l as f64 / total as f64;
            assert!((frac - 0.5).abs() <= 0.05, "{g}: {frac}");
        }
    }
}
