//! Predicting and scoring full distributions of human judgments on graded
//! natural language inference items.
//!
//! The crate covers the whole experimental toolkit: label schemes and vote
//! statistics ([`labels`], [`data`]), distribution distances ([`distmath`]),
//! personality-prompted vote collection ([`prompting`]), genetic fitting of
//! prompt mixture weights ([`ga`]), the classical text-feature comparison
//! stack ([`text`], [`ml`]), survey timing and quality control ([`survey`]),
//! item generation pipelines ([`datagen`]) and the experiment harness
//! ([`harness`]).

pub mod data;
pub mod datagen;
pub mod distmath;
pub mod error;
pub mod ga;
pub mod harness;
pub mod io;
pub mod labels;
pub mod ml;
pub mod prompting;
pub mod seed;
pub mod split;
pub mod survey;
pub mod text;

pub use data::{
    gold_label, ordinal_variance, to_distribution, Item, ItemType, Phase, VoteDistribution,
    VoteSet,
};
pub use error::{Error, Result};
pub use labels::{map_6to3, ordinal_of, Label, LabelScheme};
