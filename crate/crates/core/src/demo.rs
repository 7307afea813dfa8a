//! A small synthetic six-layer dataset on a 100 x 100 extent.
//!
//! Road, rail and waterway polylines, power plants and communication towers
//! as points, and a population density lattice. The density lattice covers
//! the corners of the extent, so with zero padding the bounding box is
//! exactly (0,0)-(100,100) and the power plants fall on 8x8 cell centers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::cli::{GridConfig, LayerEntry, OutputConfig, ProjectConfig, SearchSection};
use crate::geodata::{
    self, ConstraintLayer, DensitySample, Features, GeoPoint, LayerSet, Polyline,
};

pub const EXTENT: f64 = 100.0;

/// Stakeholder weights in layer order.
pub const RAW_WEIGHTS: [f64; 6] = [3.0, 2.0, 1.0, 3.0, 2.0, 2.0];

pub const POWER_PLANTS: [(f64, f64); 2] = [(31.25, 56.25), (81.25, 18.75)];

fn p(x: f64, y: f64) -> GeoPoint {
    GeoPoint { x, y }
}

fn line(id: u64, vertices: &[(f64, f64)]) -> Polyline {
    Polyline {
        id,
        vertices: vertices.iter().map(|&(x, y)| p(x, y)).collect(),
    }
}

fn population(x: f64, y: f64) -> f64 {
    let town = 900.0 * (-((x - 60.0).powi(2) + (y - 40.0).powi(2)) / 1500.0).exp();
    let village = 400.0 * (-((x - 15.0).powi(2) + (y - 85.0).powi(2)) / 600.0).exp();
    (town + village + 20.0).round()
}

pub fn layers() -> LayerSet {
    let build = || -> geodata::Result<LayerSet> {
        let lattice: Vec<DensitySample> = (0..=5)
            .flat_map(|j| (0..=5).map(move |i| (i as f64 * 20.0, j as f64 * 20.0)))
            .map(|(x, y)| DensitySample {
                at: p(x, y),
                value: population(x, y),
            })
            .collect();
        LayerSet::new(vec![
            ConstraintLayer::new(
                "road",
                Features::Polylines(vec![
                    line(1, &[(0.0, 20.0), (40.0, 35.0), (100.0, 30.0)]),
                    line(2, &[(50.0, 0.0), (55.0, 50.0), (45.0, 100.0)]),
                ]),
                Some(25.0),
            )?,
            ConstraintLayer::new(
                "rail",
                Features::Polylines(vec![line(1, &[(0.0, 70.0), (60.0, 60.0), (100.0, 90.0)])]),
                Some(30.0),
            )?,
            ConstraintLayer::new(
                "waterway",
                Features::Polylines(vec![line(1, &[(10.0, 100.0), (20.0, 60.0), (15.0, 0.0)])]),
                Some(20.0),
            )?,
            ConstraintLayer::new(
                "power",
                Features::Points(POWER_PLANTS.iter().map(|&(x, y)| p(x, y)).collect()),
                Some(40.0),
            )?,
            ConstraintLayer::new(
                "communication",
                Features::Points(vec![p(50.0, 50.0), p(20.0, 20.0), p(85.0, 80.0)]),
                Some(35.0),
            )?,
            ConstraintLayer::new("population", Features::Density(lattice), None)?,
        ])
    };
    build().expect("demo layers are valid")
}

/// Project config for the demo layers, as written by [`write_project`].
pub fn config(nx: usize, ny: usize) -> ProjectConfig {
    let set = layers();
    ProjectConfig {
        version: 1,
        layers: set
            .iter()
            .map(|l| LayerEntry {
                name: l.name().to_string(),
                kind: l.kind(),
                path: PathBuf::from(format!("{}.csv", l.name())),
                d_cut: l.d_cut(),
                invert: l.invert(),
            })
            .collect(),
        grid: GridConfig {
            nx,
            ny,
            padding: 0.0,
            bbox: None,
        },
        weights: RAW_WEIGHTS.to_vec(),
        threshold: 0.6,
        search: SearchSection::default(),
        output: OutputConfig {
            remarks_path: PathBuf::from("remarks.csv"),
            deterministic_clock: true,
            report_path: None,
        },
    }
}

/// Writes the layer files and `project.json` into `dir`; returns the config path.
pub fn write_project(dir: &Path, nx: usize, ny: usize) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    for layer in layers().iter() {
        let file = fs::File::create(dir.join(format!("{}.csv", layer.name())))?;
        geodata::write_layer(layer, file).map_err(io::Error::other)?;
    }
    write_config(dir, &config(nx, ny))
}

pub fn write_config(dir: &Path, cfg: &ProjectConfig) -> io::Result<PathBuf> {
    let path = dir.join("project.json");
    let mut text = serde_json::to_string_pretty(cfg).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}
