//! Per-constraint score rasters, weight normalization and the weighted-sum objective.

use serde::Serialize;
use thiserror::Error;

use crate::geodata::{self, Cell, GeoError, GridSpec, LayerKind, LayerSet};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("all raw weights are zero")]
    AllZeroWeights,
    #[error("raw weight {0} is negative or not finite")]
    InvalidWeight(f64),
    #[error("no weights given")]
    NoWeights,
    #[error("length mismatch: {weights} weights for {scores} scores")]
    LengthMismatch { weights: usize, scores: usize },
    #[error(transparent)]
    Geo(#[from] GeoError),
}

/// Stakeholder importance values, one per constraint, before normalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RawWeights(Vec<f64>);

impl RawWeights {
    pub fn new(values: Vec<f64>) -> Result<Self, ScoringError> {
        if values.is_empty() {
            return Err(ScoringError::NoWeights);
        }
        if let Some(&bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(ScoringError::InvalidWeight(bad));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Convex weights: each in [0,1], summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Divides each raw weight by the total.
pub fn normalize_weights(raw: &RawWeights) -> Result<WeightVector, ScoringError> {
    let total: f64 = raw.values().iter().sum();
    if total == 0.0 {
        return Err(ScoringError::AllZeroWeights);
    }
    Ok(WeightVector(
        raw.values().iter().map(|r| r / total).collect(),
    ))
}

/// Linear decay from 1 at the feature to 0 at `d_cut` and beyond.
pub fn proximity_score(d: f64, d_cut: f64) -> f64 {
    (1.0 - d / d_cut).max(0.0)
}

/// Min-max rescaling; a constant layer scores 1 everywhere.
pub fn density_score(v: f64, v_min: f64, v_max: f64) -> f64 {
    if v_max == v_min {
        return 1.0;
    }
    ((v - v_min) / (v_max - v_min)).clamp(0.0, 1.0)
}

/// One constraint's scores over every cell, row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreField {
    pub layer_name: String,
    pub grid: GridSpec,
    values: Vec<f64>,
}

impl ScoreField {
    /// Wraps precomputed values; they must cover the grid and lie in [0,1].
    pub fn from_values(
        layer_name: impl Into<String>,
        grid: GridSpec,
        values: Vec<f64>,
    ) -> Option<Self> {
        let ok =
            values.len() == grid.cell_count() && values.iter().all(|v| (0.0..=1.0).contains(v));
        ok.then(|| Self {
            layer_name: layer_name.into(),
            grid,
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, cell: Cell) -> Result<f64, GeoError> {
        Ok(self.values[self.grid.index_of(cell)?])
    }
}

/// The per-constraint scores of a single cell, in layer order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScoreVector(pub Vec<f64>);

impl ScoreVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Fitness(pub f64);

impl Fitness {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Rasterizes every layer over the grid's cell centers.
///
/// Point and polyline layers decay linearly with distance up to their cutoff.
/// Density layers take the nearest sample and are min-max scaled over the
/// values that actually land on this grid. Inverted layers score `1 - s`.
pub fn build_score_fields(
    layers: &LayerSet,
    grid: &GridSpec,
) -> Result<Vec<ScoreField>, ScoringError> {
    let centers = grid
        .cells()
        .map(|c| geodata::cell_center(grid, c))
        .collect::<Result<Vec<_>, _>>()?;

    layers
        .iter()
        .map(|layer| {
            let mut values = match layer.kind() {
                LayerKind::Point | LayerKind::Polyline => {
                    let d_cut = layer
                        .d_cut()
                        .ok_or_else(|| GeoError::MissingCutoff(layer.name().to_string()))?;
                    centers
                        .iter()
                        .map(|p| {
                            Ok(proximity_score(
                                geodata::distance_to_nearest(layer, p)?,
                                d_cut,
                            ))
                        })
                        .collect::<Result<Vec<_>, GeoError>>()?
                }
                LayerKind::Density => {
                    let raw = centers
                        .iter()
                        .map(|p| geodata::density_at(layer, p))
                        .collect::<Result<Vec<_>, _>>()?;
                    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    raw.into_iter().map(|v| density_score(v, lo, hi)).collect()
                }
            };
            if layer.invert() {
                values.iter_mut().for_each(|v| *v = 1.0 - *v);
            }
            Ok(ScoreField {
                layer_name: layer.name().to_string(),
                grid: *grid,
                values,
            })
        })
        .collect()
}

pub fn score_vector_at(fields: &[ScoreField], cell: Cell) -> Result<ScoreVector, GeoError> {
    fields
        .iter()
        .map(|f| f.at(cell))
        .collect::<Result<_, _>>()
        .map(ScoreVector)
}

/// Weighted sum of scores.
pub fn aggregate(w: &WeightVector, s: &ScoreVector) -> Result<Fitness, ScoringError> {
    if w.len() != s.0.len() {
        return Err(ScoringError::LengthMismatch {
            weights: w.len(),
            scores: s.0.len(),
        });
    }
    Ok(Fitness(
        w.values().iter().zip(s.values()).map(|(w, s)| w * s).sum(),
    ))
}

/// Fitness of every cell, row-major.
pub fn fitness_field(fields: &[ScoreField], w: &WeightVector) -> Result<Vec<f64>, ScoringError> {
    let grid = match fields.first() {
        Some(f) => f.grid,
        None => {
            return Err(ScoringError::LengthMismatch {
                weights: w.len(),
                scores: 0,
            })
        }
    };
    grid.cells()
        .map(|c| Ok(aggregate(w, &score_vector_at(fields, c)?)?.value()))
        .collect()
}
