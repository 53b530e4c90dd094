//! Synthetic catalogs and annotator pools shared by the integration tests.
#![allow(dead_code)]

pub mod server;

use std::collections::BTreeMap;

use arena_core::ingest::{Catalog, Manifest};
use arena_core::model::{Scenario, Split};
use arena_core::scheduler::{BattlePair, Pack};
use arena_core::{Asset, Dimension, Generator, Modality, PromptSpec, Track, ViewKind, VoteChoice};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn generator_id(track: Track, g: usize) -> String {
    match track {
        Track::TextTo3d => format!("t-g{g:02}"),
        Track::ImageTo3d => format!("i-g{g:02}"),
    }
}

/// One track block: `n_prompts` prompts, every one rendered by `n_gens` generators.
pub fn manifest(blocks: &[(Track, usize, usize)]) -> Manifest {
    let mut m = Manifest { version: 1, prompts: Vec::new(), generators: Vec::new(), assets: Vec::new() };
    for &(track, n_prompts, n_gens) in blocks {
        for g in 0..n_gens {
            m.generators.push(Generator {
                generator_id: generator_id(track, g),
                display_name: format!("Model {}{g}", if track == Track::TextTo3d { "T" } else { "I" }),
                track,
            });
        }
        for p in 0..n_prompts {
            let (prompt_id, modality, content_ref) = match track {
                Track::TextTo3d => (format!("tp-{p:04}"), Modality::Text, format!("a small object, variant {p}")),
                Track::ImageTo3d => (format!("ip-{p:04}"), Modality::Image, format!("prompts/ip-{p:04}.png")),
            };
            for g in 0..n_gens {
                let asset_id = format!("{prompt_id}.{}", generator_id(track, g));
                m.assets.push(Asset {
                    render_refs: ViewKind::ALL
                        .iter()
                        .map(|v| (*v, format!("renders/{asset_id}/{}.mp4", v.as_str())))
                        .collect(),
                    asset_id,
                    prompt_id: prompt_id.clone(),
                    generator_id: generator_id(track, g),
                    embedding_ref: None,
                });
            }
            m.prompts.push(PromptSpec {
                prompt_id,
                modality,
                content_ref,
                subject: "objects".into(),
                scenario: Scenario::SingleObject,
                split: Split::Test,
            });
        }
    }
    m
}

pub fn catalog(blocks: &[(Track, usize, usize)]) -> Catalog {
    Catalog::from_manifest(manifest(blocks)).expect("synthetic manifest is valid")
}

/// Planted quality: higher generator index is better on every dimension.
pub fn quality(catalog: &Catalog, asset_id: &str) -> usize {
    let g = &catalog.assets[asset_id].generator_id;
    g[g.len() - 2..].parse().expect("numbered generator")
}

pub fn truth(catalog: &Catalog, pair: &BattlePair) -> [VoteChoice; 5] {
    let l = quality(catalog, &pair.left_asset_id);
    let r = quality(catalog, &pair.right_asset_id);
    let c = if l > r { VoteChoice::LeftBetter } else { VoteChoice::RightBetter };
    [c; Dimension::COUNT]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Behaviour {
    /// Follows the planted order, replacing each dimension by a uniform draw
    /// with the given probability.
    Honest(f64),
    Random,
    /// Clicks tie or both-bad.
    Lazy,
    /// Always picks the worse side.
    Contrarian,
}

impl Behaviour {
    pub fn is_adversarial(self) -> bool {
        !matches!(self, Behaviour::Honest(_))
    }

    pub fn vote(self, truth: &[VoteChoice; 5], rng: &mut ChaCha8Rng) -> [VoteChoice; 5] {
        std::array::from_fn(|i| match self {
            Behaviour::Honest(noise) => {
                if rng.gen_bool(noise) {
                    *VoteChoice::ALL.choose(rng).unwrap()
                } else {
                    truth[i]
                }
            }
            Behaviour::Random => *VoteChoice::ALL.choose(rng).unwrap(),
            Behaviour::Lazy => {
                if rng.gen_bool(0.5) {
                    VoteChoice::Tie
                } else {
                    VoteChoice::BothBad
                }
            }
            Behaviour::Contrarian => truth[i].mirrored(),
        })
    }
}

pub fn pool(honest: usize, adversarial: &[Behaviour]) -> Vec<(String, Behaviour)> {
    let mut out: Vec<(String, Behaviour)> =
        (0..honest).map(|i| (format!("expert-{i:02}"), Behaviour::Honest(0.1))).collect();
    for (i, b) in adversarial.iter().enumerate() {
        out.push((format!("expert-{:02}", honest + i), *b));
    }
    out
}

/// Annotators per pack. Ordinary packs go round-robin over a seeded shuffle.
/// Cross packs take their annotator pairs from a round-robin tournament
/// (circle method) over the same shuffle, so nobody meets a partner twice
/// before meeting everyone.
pub fn assign(packs: &[Pack], annotators: &[String], rng: &mut ChaCha8Rng) -> BTreeMap<String, Vec<String>> {
    let mut order: Vec<Option<&String>> = annotators.iter().map(Some).collect();
    order.shuffle(rng);
    if order.len() % 2 == 1 {
        order.push(None);
    }
    let m = order.len();
    let mut matches = Vec::new();
    for round in 0..m - 1 {
        // Slot 0 stays put; the others rotate by one per round.
        let at = |k: usize| if k == 0 { order[0] } else { order[1 + (k - 1 + round) % (m - 1)] };
        for k in 0..m / 2 {
            if let (Some(a), Some(b)) = (at(k), at(m - 1 - k)) {
                matches.push(vec![a.clone(), b.clone()]);
            }
        }
    }
    let people: Vec<&String> = order.iter().flatten().copied().collect();
    let (mut single, mut cross) = (0, 0);
    packs
        .iter()
        .map(|p| {
            let who = if p.flags.is_cross_annotation {
                cross += 1;
                matches[(cross - 1) % matches.len()].clone()
            } else {
                single += 1;
                vec![people[(single - 1) % people.len()].clone()]
            };
            (p.pack_id.clone(), who)
        })
        .collect()
}
