//! Spatial site selection: score grid cells against weighted constraint
//! layers and find acceptable sites with a randomized weighted-sum
//! evolutionary search or an exhaustive scan.

pub mod bench;
pub mod cli;
pub mod demo;
pub mod geodata;
pub mod scoring;
pub mod search;

pub use geodata::{Cell, ConstraintLayer, GeoPoint, GridSpec, LayerKind, LayerSet};
pub use scoring::{Fitness, RawWeights, ScoreField, ScoreVector, WeightVector};
pub use search::{Method, SearchConfig, SearchResult};
