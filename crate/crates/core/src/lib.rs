//! Pairwise-preference arena for 3D generative models: catalog and event-log
//! ingestion, battle scheduling, annotation cleaning, per-dimension Elo
//! leaderboards, scorer agreement metrics and embedding score heads.

pub mod error;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod rating;
pub mod reference;
pub mod scheduler;
pub mod scorehead;
pub mod state;
pub mod validation;

pub use error::{ArenaError, Result};
pub use model::{
    normalize_score, AbsoluteScore, Asset, ComparisonVote, Dimension, Generator, Modality, PromptSpec,
    ScoreRange, Track, ViewKind, VoteChoice, VoteSource,
};
pub use state::{ArenaState, BoardKey};
