//! Constraint layers, the candidate grid, and planar geometry queries.
//!
//! Layers are read from small CSV files (one per constraint). All geometry is
//! planar Euclidean; coordinates are assumed to be projected already.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default fraction of each span added to both sides of the bounding box.
pub const DEFAULT_PADDING: f64 = 0.05;

/// Half-width used to inflate an axis whose span is zero.
const DEGENERATE_HALF_SPAN: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("layer file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: I/O error: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("layer `{0}` has no features")]
    EmptyLayer(String),
    #[error("{}:{line}: {reason}", path.display())]
    MalformedRow {
        path: PathBuf,
        line: u64,
        reason: String,
    },
    #[error("layer `{0}` needs a positive cutoff distance")]
    MissingCutoff(String),
    #[error("layer `{layer}`: polyline {id} has fewer than 2 vertices")]
    ShortPolyline { layer: String, id: u64 },
    #[error("cell ({col}, {row}) is outside the {nx}x{ny} grid")]
    OutOfGrid {
        col: usize,
        row: usize,
        nx: usize,
        ny: usize,
    },
    #[error("layer `{layer}` is a {actual} layer; operation requires {expected}")]
    WrongKind {
        layer: String,
        actual: LayerKind,
        expected: &'static str,
    },
    #[error("coordinate ({0}, {1}) is not finite")]
    NonFinite(f64, f64),
    #[error("invalid layer `{layer}`: {reason}")]
    InvalidLayer { layer: String, reason: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateLayer(String),
    #[error("a layer set needs at least one layer")]
    NoLayers,
    #[error("grid needs at least one column and one row (got {nx}x{ny})")]
    EmptyGrid { nx: usize, ny: usize },
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
}

pub type Result<T, E = GeoError> = std::result::Result<T, E>;

/// A planar location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeoError::NonFinite(x, y))
        }
    }

    pub fn distance(&self, other: &GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl fmt::Display for GeoPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Point,
    Polyline,
    Density,
}

impl LayerKind {
    fn header(self) -> &'static [&'static str] {
        match self {
            LayerKind::Point => &["x", "y"],
            LayerKind::Polyline => &["id", "x", "y"],
            LayerKind::Density => &["x", "y", "value"],
        }
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayerKind::Point => "point",
            LayerKind::Polyline => "polyline",
            LayerKind::Density => "density",
        })
    }
}

/// An ordered vertex chain, identified by the `id` column of its file.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    pub id: u64,
    pub vertices: Vec<GeoPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensitySample {
    pub at: GeoPoint,
    pub value: f64,
}

/// Feature payload of a layer; the variant is the layer's kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Features {
    Points(Vec<GeoPoint>),
    Polylines(Vec<Polyline>),
    Density(Vec<DensitySample>),
}

impl Features {
    pub fn kind(&self) -> LayerKind {
        match self {
            Features::Points(_) => LayerKind::Point,
            Features::Polylines(_) => LayerKind::Polyline,
            Features::Density(_) => LayerKind::Density,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Features::Points(p) => p.len(),
            Features::Polylines(p) => p.len(),
            Features::Density(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every coordinate the layer touches: points, polyline vertices, sample sites.
    pub fn vertices(&self) -> Box<dyn Iterator<Item = GeoPoint> + '_> {
        match self {
            Features::Points(p) => Box::new(p.iter().copied()),
            Features::Polylines(lines) => {
                Box::new(lines.iter().flat_map(|l| l.vertices.iter().copied()))
            }
            Features::Density(s) => Box::new(s.iter().map(|s| s.at)),
        }
    }
}

/// One named siting constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintLayer {
    name: String,
    features: Features,
    d_cut: Option<f64>,
    invert: bool,
}

impl ConstraintLayer {
    /// Builds a layer, checking that the payload matches the kind-specific rules:
    /// at least one feature, polylines of two or more vertices, and a positive
    /// cutoff for point/polyline layers (none for density layers).
    pub fn new(name: impl Into<String>, features: Features, d_cut: Option<f64>) -> Result<Self> {
        let name = name.into();
        if features.is_empty() {
            return Err(GeoError::EmptyLayer(name));
        }
        match (&features, d_cut) {
            (Features::Density(samples), cut) => {
                if cut.is_some() {
                    return Err(GeoError::InvalidLayer {
                        layer: name,
                        reason: "density layers take no cutoff distance".into(),
                    });
                }
                if let Some(s) = samples
                    .iter()
                    .find(|s| !(s.value >= 0.0 && s.value.is_finite()))
                {
                    return Err(GeoError::InvalidLayer {
                        layer: name,
                        reason: format!(
                            "density value {} must be finite and non-negative",
                            s.value
                        ),
                    });
                }
            }
            (_, None) => return Err(GeoError::MissingCutoff(name)),
            (_, Some(c)) if !(c > 0.0 && c.is_finite()) => {
                return Err(GeoError::MissingCutoff(name))
            }
            (Features::Polylines(lines), Some(_)) => {
                if let Some(short) = lines.iter().find(|l| l.vertices.len() < 2) {
                    return Err(GeoError::ShortPolyline {
                        layer: name,
                        id: short.id,
                    });
                }
            }
            (Features::Points(_), Some(_)) => {}
        }
        if let Some(p) = features
            .vertices()
            .find(|p| !(p.x.is_finite() && p.y.is_finite()))
        {
            return Err(GeoError::NonFinite(p.x, p.y));
        }
        Ok(Self {
            name,
            features,
            d_cut,
            invert: false,
        })
    }

    /// Marks the layer as undesirable: its score becomes `1 - score`.
    pub fn inverted(mut self, invert: bool) -> Self {
        self.invert = invert;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> LayerKind {
        self.features.kind()
    }

    pub fn features(&self) -> &Features {
        &self.features
    }

    pub fn d_cut(&self) -> Option<f64> {
        self.d_cut
    }

    pub fn invert(&self) -> bool {
        self.invert
    }
}

/// The ordered set of constraints; position is the constraint index.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSet {
    layers: Vec<ConstraintLayer>,
}

impl LayerSet {
    pub fn new(layers: Vec<ConstraintLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GeoError::NoLayers);
        }
        let mut seen = HashMap::new();
        for (i, layer) in layers.iter().enumerate() {
            if seen.insert(layer.name.clone(), i).is_some() {
                return Err(GeoError::DuplicateLayer(layer.name.clone()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConstraintLayer] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ConstraintLayer> {
        self.layers.iter()
    }
}

impl<'a> IntoIterator for &'a LayerSet {
    type Item = &'a ConstraintLayer;
    type IntoIter = std::slice::Iter<'a, ConstraintLayer>;

    fn into_iter(self) -> Self::IntoIter {
        self.layers.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BoundingBox {
    pub fn new(min: GeoPoint, max: GeoPoint) -> Result<Self> {
        if min.x < max.x && min.y < max.y {
            Ok(Self { min, max })
        } else {
            Err(GeoError::InvalidBox(format!(
                "{min} is not strictly below {max}"
            )))
        }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Closed containment test.
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.min, self.max)
    }
}

/// A grid cell address: `col` along x, `row` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.col, self.row)
    }
}

/// Regular `nx` by `ny` discretization of a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    bbox: BoundingBox,
    nx: usize,
    ny: usize,
}

impl GridSpec {
    pub fn new(bbox: BoundingBox, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(GeoError::EmptyGrid { nx, ny });
        }
        Ok(Self { bbox, nx, ny })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn check(&self, cell: Cell) -> Result<()> {
        if cell.col < self.nx && cell.row < self.ny {
            Ok(())
        } else {
            Err(GeoError::OutOfGrid {
                col: cell.col,
                row: cell.row,
                nx: self.nx,
                ny: self.ny,
            })
        }
    }

    /// Row-major position of a cell (row varies slowest).
    pub fn index_of(&self, cell: Cell) -> Result<usize> {
        self.check(cell)?;
        Ok(cell.row * self.nx + cell.col)
    }

    pub fn cell_at_index(&self, index: usize) -> Cell {
        Cell::new(index % self.nx, index / self.nx)
    }

    /// All cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|i| self.cell_at_index(i))
    }

    /// The cell that contains `p`; points on the far edges belong to the last cell.
    pub fn cell_containing(&self, p: &GeoPoint) -> Option<Cell> {
        if !self.bbox.contains(p) {
            return None;
        }
        let fx = (p.x - self.bbox.min.x) / self.bbox.width() * self.nx as f64;
        let fy = (p.y - self.bbox.min.y) / self.bbox.height() * self.ny as f64;
        let col = (fx.floor() as usize).min(self.nx - 1);
        let row = (fy.floor() as usize).min(self.ny - 1);
        Some(Cell::new(col, row))
    }
}

/// Reads one layer file. The header must match the kind's schema exactly.
pub fn parse_layer_file(
    path: impl AsRef<Path>,
    name: &str,
    kind: LayerKind,
    d_cut: Option<f64>,
) -> Result<ConstraintLayer> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(GeoError::MissingFile(path.to_path_buf()));
    }
    if matches!(kind, LayerKind::Point | LayerKind::Polyline) && d_cut.is_none() {
        return Err(GeoError::MissingCutoff(name.to_string()));
    }
    let malformed = |line: u64, reason: String| GeoError::MalformedRow {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| GeoError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;

    let header = reader
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    let expected = kind.header();
    if header.iter().ne(expected.iter().copied()) {
        return Err(malformed(
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut points = Vec::new();
    let mut samples = Vec::new();
    let mut polylines: Vec<Polyline> = Vec::new();
    let mut by_id: HashMap<u64, usize> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != expected.len() {
            return Err(malformed(
                line,
                format!(
                    "expected {} columns, found {}",
                    expected.len(),
                    record.len()
                ),
            ));
        }
        let number = |i: usize| -> Result<f64> {
            let field = &record[i];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(line, format!("`{field}` is not a finite number")))
        };
        match kind {
            LayerKind::Point => points.push(GeoPoint {
                x: number(0)?,
                y: number(1)?,
            }),
            LayerKind::Polyline => {
                let id: u64 = record[0].parse().map_err(|_| {
                    malformed(line, format!("`{}` is not an unsigned id", &record[0]))
                })?;
                let vertex = GeoPoint {
                    x: number(1)?,
                    y: number(2)?,
                };
                let slot = *by_id.entry(id).or_insert_with(|| {
                    polylines.push(Polyline {
                        id,
                        vertices: Vec::new(),
                    });
                    polylines.len() - 1
                });
                polylines[slot].vertices.push(vertex);
            }
            LayerKind::Density => {
                let value = number(2)?;
                if value < 0.0 {
                    return Err(malformed(
                        line,
                        format!("density value {value} is negative"),
                    ));
                }
                samples.push(DensitySample {
                    at: GeoPoint {
                        x: number(0)?,
                        y: number(1)?,
                    },
                    value,
                });
            }
        }
    }

    let features = match kind {
        LayerKind::Point => Features::Points(points),
        LayerKind::Polyline => Features::Polylines(polylines),
        LayerKind::Density => Features::Density(samples),
    };
    let d_cut = if kind == LayerKind::Density {
        None
    } else {
        d_cut
    };
    ConstraintLayer::new(name, features, d_cut)
}

/// Writes a layer in the same CSV schema `parse_layer_file` reads.
pub fn write_layer<W: Write>(layer: &ConstraintLayer, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(layer.kind().header())?;
    match layer.features() {
        Features::Points(points) => {
            for p in points {
                w.write_record([p.x.to_string(), p.y.to_string()])?;
            }
        }
        Features::Polylines(lines) => {
            for line in lines {
                for v in &line.vertices {
                    w.write_record([line.id.to_string(), v.x.to_string(), v.y.to_string()])?;
                }
            }
        }
        Features::Density(samples) => {
            for s in samples {
                w.write_record([s.at.x.to_string(), s.at.y.to_string(), s.value.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Box around every vertex of every layer, widened by `padding` of each span on
/// both sides. A zero span is widened by half a unit each way.
pub fn compute_bounding_box(layers: &LayerSet, padding: f64) -> BoundingBox {
    let padding = padding.max(0.0);
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in layers.iter().flat_map(|l| l.features().vertices()) {
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let widen = |lo: f64, hi: f64| {
        let span = hi - lo;
        if span > 0.0 {
            (lo - padding * span, hi + padding * span)
        } else {
            (lo - DEGENERATE_HALF_SPAN, hi + DEGENERATE_HALF_SPAN)
        }
    };
    let (min_x, max_x) = widen(min_x, max_x);
    let (min_y, max_y) = widen(min_y, max_y);
    BoundingBox {
        min: GeoPoint { x: min_x, y: min_y },
        max: GeoPoint { x: max_x, y: max_y },
    }
}

pub fn cell_center(grid: &GridSpec, cell: Cell) -> Result<GeoPoint> {
    grid.check(cell)?;
    let bbox = grid.bbox();
    let dx = bbox.width() / grid.nx() as f64;
    let dy = bbox.height() / grid.ny() as f64;
    Ok(GeoPoint {
        x: bbox.min.x + (cell.col as f64 + 0.5) * dx,
        y: bbox.min.y + (cell.row as f64 + 0.5) * dy,
    })
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: &GeoPoint, a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len2 = ex * ex + ey * ey;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = (((p.x - a.x) * ex + (p.y - a.y) * ey) / len2).clamp(0.0, 1.0);
    let foot = GeoPoint {
        x: a.x + t * ex,
        y: a.y + t * ey,
    };
    p.distance(&foot)
}

pub fn distance_to_nearest(layer: &ConstraintLayer, p: &GeoPoint) -> Result<f64> {
    match layer.features() {
        Features::Points(points) => Ok(points
            .iter()
            .map(|q| p.distance(q))
            .fold(f64::INFINITY, f64::min)),
        Features::Polylines(lines) => Ok(lines
            .iter()
            .flat_map(|l| l.vertices.windows(2))
            .map(|seg| point_segment_distance(p, &seg[0], &seg[1]))
            .fold(f64::INFINITY, f64::min)),
        Features::Density(_) => Err(GeoError::WrongKind {
            layer: layer.name().to_string(),
            actual: LayerKind::Density,
            expected: "point or polyline",
        }),
    }
}

/// Value of the nearest density sample; equal distances go to the earliest sample.
pub fn density_at(layer: &ConstraintLayer, p: &GeoPoint) -> Result<f64> {
    let Features::Density(samples) = layer.features() else {
        return Err(GeoError::WrongKind {
            layer: layer.name().to_string(),
            actual: layer.kind(),
            expected: "density",
        });
    };
    let mut best = &samples[0];
    let mut best_d = p.distance(&best.at);
    for s in &samples[1..] {
        let d = p.distance(&s.at);
        if d < best_d {
            best = s;
            best_d = d;
        }
    }
    Ok(best.value)
}

/// What a layer says about one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureValue {
    Distance(f64),
    Density(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureReport {
    pub layer: String,
    pub kind: LayerKind,
    pub value: FeatureValue,
    pub query: GeoPoint,
}

impl fmt::Display for FeatureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value {
            FeatureValue::Distance(d) => write!(
                f,
                "{} ({}): nearest feature at distance {:.6} from x={}, y={}",
                self.layer, self.kind, d, self.query.x, self.query.y
            ),
            FeatureValue::Density(v) => write!(
                f,
                "{} ({}): density {:.6} at x={}, y={}",
                self.layer, self.kind, v, self.query.x, self.query.y
            ),
        }
    }
}

/// Per-layer feature summary at `p`, in layer order.
pub fn query_features_at(layers: &LayerSet, p: &GeoPoint) -> Vec<FeatureReport> {
    layers
        .iter()
        .map(|layer| {
            let value = match layer.kind() {
                LayerKind::Density => {
                    FeatureValue::Density(density_at(layer, p).expect("density kind"))
                }
                _ => FeatureValue::Distance(distance_to_nearest(layer, p).expect("distance kind")),
            };
            FeatureReport {
                layer: layer.name().to_string(),
                kind: layer.kind(),
                value,
                query: *p,
            }
        })
        .collect()
}
