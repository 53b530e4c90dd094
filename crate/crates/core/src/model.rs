//! Domain types shared by every stage of the pipeline.
//!
//! Identifiers are opaque strings. Timestamps are logical event times supplied
//! by the caller; nothing in this crate reads a wall clock.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};

/// One of the five evaluation criteria.
///
/// Iteration order (see [`Dimension::ALL`]) is fixed: geometry plausibility,
/// geometry details, texture quality, geometry-texture coherence, and
/// prompt-asset alignment. Every per-dimension array in the crate is indexed
/// in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    GeoPlausibility,
    GeoDetails,
    TexQuality,
    GeoTexCoherence,
    PromptAlignment,
}

impl Dimension {
    pub const COUNT: usize = 5;

    pub const ALL: [Dimension; 5] = [
        Dimension::GeoPlausibility,
        Dimension::GeoDetails,
        Dimension::TexQuality,
        Dimension::GeoTexCoherence,
        Dimension::PromptAlignment,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::GeoPlausibility => "geo_plausibility",
            Dimension::GeoDetails => "geo_details",
            Dimension::TexQuality => "tex_quality",
            Dimension::GeoTexCoherence => "geo_tex_coherence",
            Dimension::PromptAlignment => "prompt_alignment",
        }
    }

    /// Column header used in leaderboard and metric tables.
    pub fn label(self) -> &'static str {
        match self {
            Dimension::GeoPlausibility => "Plausibility",
            Dimension::GeoDetails => "Geo. Details",
            Dimension::TexQuality => "Tex. Quality",
            Dimension::GeoTexCoherence => "Geo-Tex.",
            Dimension::PromptAlignment => "Alignment",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| ArenaError::invalid("dimension", format!("unknown dimension '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    SingleObject,
    MultiObject,
    SpatialRelation,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(ArenaError::invalid("split", format!("unknown split '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub modality: Modality,
    /// Prompt text for [`Modality::Text`], an image path for [`Modality::Image`].
    pub content_ref: String,
    pub subject: String,
    pub scenario: Scenario,
    pub split: Split,
}

const IMAGE_EXTENSIONS: [&str; 5] = ["png", "jpg", "jpeg", "webp", "bmp"];

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.prompt_id.is_empty() {
            return Err(ArenaError::invalid("prompt_id", "empty prompt id"));
        }
        let looks_like_image = std::path::Path::new(&self.content_ref)
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
            .unwrap_or(false);
        match self.modality {
            Modality::Image if !looks_like_image => Err(ArenaError::invalid(
                "content_ref",
                format!("image prompt '{}' does not reference an image file", self.prompt_id),
            )),
            Modality::Text if self.content_ref.trim().is_empty() => Err(ArenaError::invalid(
                "content_ref",
                format!("text prompt '{}' is empty", self.prompt_id),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Track {
    #[serde(rename = "text_to_3d")]
    TextTo3d,
    #[serde(rename = "image_to_3d")]
    ImageTo3d,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generator {
    pub generator_id: String,
    pub display_name: String,
    pub track: Track,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Geometry,
    Normal,
    Rgb,
}

impl ViewKind {
    pub const ALL: [ViewKind; 3] = [ViewKind::Geometry, ViewKind::Normal, ViewKind::Rgb];

    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::Geometry => "geometry",
            ViewKind::Normal => "normal",
            ViewKind::Rgb => "rgb",
        }
    }
}

impl FromStr for ViewKind {
    type Err = ArenaError;

    fn from_str(s: &str) -> Result<Self> {
        ViewKind::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| ArenaError::invalid("view", format!("unknown view kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Asset {
    pub asset_id: String,
    pub prompt_id: String,
    pub generator_id: String,
    #[serde(default)]
    pub render_refs: BTreeMap<ViewKind, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_ref: Option<String>,
}

impl Asset {
    /// An asset missing any of the three render views cannot be shown in a battle.
    pub fn is_complete(&self) -> bool {
        ViewKind::ALL.iter().all(|v| self.render_refs.contains_key(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteChoice {
    LeftBetter,
    RightBetter,
    Tie,
    BothBad,
}

impl VoteChoice {
    pub const ALL: [VoteChoice; 4] = [
        VoteChoice::LeftBetter,
        VoteChoice::RightBetter,
        VoteChoice::Tie,
        VoteChoice::BothBad,
    ];

    pub fn is_directional(self) -> bool {
        matches!(self, VoteChoice::LeftBetter | VoteChoice::RightBetter)
    }

    /// The same judgment with the two slots exchanged.
    pub fn mirrored(self) -> VoteChoice {
        match self {
            VoteChoice::LeftBetter => VoteChoice::RightBetter,
            VoteChoice::RightBetter => VoteChoice::LeftBetter,
            other => other,
        }
    }

    /// Human judgment of the left side winning: 1, 0.5 or 0.
    pub fn left_outcome(self) -> f64 {
        match self {
            VoteChoice::LeftBetter => 1.0,
            VoteChoice::RightBetter => 0.0,
            VoteChoice::Tie | VoteChoice::BothBad => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteSource {
    Arena,
    ExpertPack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVote {
    pub pair_id: String,
    pub annotator_id: String,
    pub choices: BTreeMap<Dimension, VoteChoice>,
    pub timestamp: u64,
    pub source: VoteSource,
}

impl ComparisonVote {
    pub fn new(
        pair_id: impl Into<String>,
        annotator_id: impl Into<String>,
        choices: [VoteChoice; 5],
        timestamp: u64,
        source: VoteSource,
    ) -> Self {
        ComparisonVote {
            pair_id: pair_id.into(),
            annotator_id: annotator_id.into(),
            choices: Dimension::ALL.into_iter().zip(choices).collect(),
            timestamp,
            source,
        }
    }

    /// Rejects partial votes. Unknown dimensions cannot occur because the key
    /// type is closed.
    pub fn validate(&self) -> Result<()> {
        if self.pair_id.is_empty() {
            return Err(ArenaError::invalid("pair_id", "empty pair id"));
        }
        if self.annotator_id.is_empty() {
            return Err(ArenaError::invalid("annotator_id", "empty annotator id"));
        }
        let missing: Vec<&str> = Dimension::ALL
            .iter()
            .filter(|d| !self.choices.contains_key(d))
            .map(|d| d.as_str())
            .collect();
        if !missing.is_empty() {
            return Err(ArenaError::invalid(
                "choices",
                format!(
                    "vote on pair '{}' is missing dimensions: {}",
                    self.pair_id,
                    missing.join(", ")
                ),
            ));
        }
        Ok(())
    }

    /// Choices in [`Dimension::ALL`] order. Panics on a partial vote, which
    /// validation rejects before any vote reaches the pipeline.
    pub fn choice_array(&self) -> [VoteChoice; 5] {
        Dimension::ALL.map(|d| self.choices[&d])
    }
}

/// Inclusive integer score range for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRange {
    pub lo: i32,
    pub hi: i32,
}

impl ScoreRange {
    pub const fn new(lo: i32, hi: i32) -> Self {
        ScoreRange { lo, hi }
    }

    /// Ranges an annotation record may declare unless configured otherwise.
    pub const DEFAULT_ALLOWED: [ScoreRange; 3] =
        [ScoreRange::new(0, 9), ScoreRange::new(0, 4), ScoreRange::new(0, 1)];

    pub fn contains(&self, s: i32) -> bool {
        self.lo <= s && s <= self.hi
    }
}

impl fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Maps a raw score onto [0, 1].
pub fn normalize_score(s: i32, range: ScoreRange) -> Result<f64> {
    if range.lo >= range.hi {
        return Err(ArenaError::invalid("range", format!("degenerate score range {range}")));
    }
    if !range.contains(s) {
        return Err(ArenaError::invalid("score", format!("score {s} outside {range}")));
    }
    Ok(f64::from(s - range.lo) / f64::from(range.hi - range.lo))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteScore {
    pub asset_id: String,
    pub annotator_id: String,
    pub raw_scores: BTreeMap<Dimension, i32>,
    pub ranges: BTreeMap<Dimension, ScoreRange>,
    /// Per-dimension ordering (best first) of the sibling assets the annotator
    /// ranked before scoring.
    #[serde(default)]
    pub rank_context: BTreeMap<Dimension, Vec<String>>,
    pub timestamp: u64,
}

impl AbsoluteScore {
    pub fn validate(&self, allowed: &[ScoreRange]) -> Result<()> {
        let record = format!("score record for asset '{}' by '{}'", self.asset_id, self.annotator_id);
        if self.asset_id.is_empty() || self.annotator_id.is_empty() {
            return Err(ArenaError::invalid("asset_id", format!("{record}: empty identifier")));
        }
        for d in Dimension::ALL {
            let s = *self.raw_scores.get(&d).ok_or_else(|| {
                ArenaError::invalid(d.as_str(), format!("{record}: missing score for {d}"))
            })?;
            let range = *self.ranges.get(&d).ok_or_else(|| {
                ArenaError::invalid(d.as_str(), format!("{record}: missing range for {d}"))
            })?;
            if !allowed.contains(&range) {
                return Err(ArenaError::invalid(
                    d.as_str(),
                    format!("{record}: range {range} for {d} is not an allowed range"),
                ));
            }
            if !range.contains(s) {
                return Err(ArenaError::invalid(
                    d.as_str(),
                    format!("{record}: score {s} for {d} outside {range}"),
                ));
            }
        }
        Ok(())
    }

    pub fn normalized(&self, d: Dimension) -> Result<f64> {
        let s = self.raw_scores.get(&d).copied();
        let r = self.ranges.get(&d).copied();
        match (s, r) {
            (Some(s), Some(r)) => normalize_score(s, r).map_err(|e| {
                ArenaError::invalid(
                    d.as_str(),
                    format!("asset '{}' by '{}': {e}", self.asset_id, self.annotator_id),
                )
            }),
            _ => Err(ArenaError::invalid(
                d.as_str(),
                format!("asset '{}' by '{}': missing {d}", self.asset_id, self.annotator_id),
            )),
        }
    }
}
