//! Side-by-side runs of both drivers and the comparison report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::Serialize;

use crate::geodata::{Cell, GeoPoint, GridSpec};
use crate::scoring::{ScoreField, WeightVector};
use crate::search::{self, Method, SearchConfig, SearchError, SearchResult};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub method: Method,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub evaluations: usize,
    pub distinct_cells: usize,
    pub best_fitness: f64,
    pub accepted_count: usize,
    /// Mean pairwise distance between the centers of distinct evaluated cells.
    pub diversity: f64,
}

pub fn measure_run(result: &SearchResult, wall_time: Duration, seed: Option<u64>) -> RunMetrics {
    let mut seen = BTreeSet::new();
    let centers: Vec<GeoPoint> = result
        .all_records
        .iter()
        .filter(|r| seen.insert(r.candidate))
        .map(|r| r.center)
        .collect();
    RunMetrics {
        method: result.method,
        seed,
        wall_time_s: wall_time.as_secs_f64(),
        evaluations: result.evaluations_used,
        distinct_cells: centers.len(),
        best_fitness: result.best().map_or(f64::NAN, |r| r.fitness.0),
        accepted_count: result.accepted.len(),
        diversity: mean_pairwise_distance(&centers),
    }
}

fn mean_pairwise_distance(points: &[GeoPoint]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            total += p.distance(q);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Min, median and max of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Spread {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = values.into_iter().collect();
        assert!(!v.is_empty(), "spread of an empty sample");
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Self {
            min: v[0],
            median,
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedSummary {
    pub seeds: Vec<u64>,
    pub best_fitness: Spread,
    pub evaluations: Spread,
    pub accepted_count: Spread,
    pub diversity: Spread,
    pub wall_time_s: Spread,
    pub runs: Vec<RunMetrics>,
}

impl WeightedSummary {
    fn from_runs(runs: Vec<RunMetrics>) -> Self {
        let spread = |f: fn(&RunMetrics) -> f64| Spread::of(runs.iter().map(f));
        Self {
            seeds: runs.iter().filter_map(|r| r.seed).collect(),
            best_fitness: spread(|r| r.best_fitness),
            evaluations: spread(|r| r.evaluations as f64),
            accepted_count: spread(|r| r.accepted_count as f64),
            diversity: spread(|r| r.diversity),
            wall_time_s: spread(|r| r.wall_time_s),
            runs,
        }
    }
}

/// One boolean per comparison row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    /// Every weighted run used fewer evaluations than the exhaustive scan.
    pub weighted_fewer_evaluations: bool,
    /// Number of seeds whose best fitness equals the exhaustive best.
    pub weighted_optimal_seeds: usize,
    /// Every seed reached the exhaustive best.
    pub weighted_always_optimal: bool,
    /// Every weighted run visited a strict subset of the cells.
    pub weighted_strict_subset: bool,
    /// Weighted runs visited more than one distinct cell.
    pub weighted_diverse: bool,
    pub brute_optimal: bool,
}

impl Verdicts {
    /// Derived only from the metrics, so a report can be re-checked on its own.
    pub fn from_metrics(weighted: &[RunMetrics], brute: &RunMetrics, cell_count: usize) -> Self {
        let optimal = weighted
            .iter()
            .filter(|r| r.best_fitness >= brute.best_fitness)
            .count();
        Self {
            weighted_fewer_evaluations: weighted.iter().all(|r| r.evaluations < brute.evaluations),
            weighted_optimal_seeds: optimal,
            weighted_always_optimal: optimal == weighted.len(),
            weighted_strict_subset: weighted.iter().all(|r| r.distinct_cells < cell_count),
            weighted_diverse: weighted.iter().all(|r| r.diversity > 0.0),
            brute_optimal: brute.evaluations == cell_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDims {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub grid: GridDims,
    pub m: usize,
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub weighted: WeightedSummary,
    pub brute: RunMetrics,
    pub brute_best_cell: Option<Cell>,
    pub verdicts: Verdicts,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("at least one seed is required")]
    NoSeeds,
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// Runs the exhaustive scan once and the weighted search once per seed.
/// `cfg.seed` is ignored in favour of `seeds`; `cfg.threshold` is used by both.
pub fn compare(
    fields: &[ScoreField],
    w: &WeightVector,
    cfg: &SearchConfig,
    grid: &GridSpec,
    seeds: &[u64],
) -> Result<ComparisonReport, BenchError> {
    if seeds.is_empty() {
        return Err(BenchError::NoSeeds);
    }
    let started = Instant::now();
    let brute_result = search::run_brute_force(fields, w, cfg.threshold, grid)?;
    let brute = measure_run(&brute_result, started.elapsed(), None);

    let runs = seeds
        .iter()
        .map(|&seed| {
            let cfg = SearchConfig {
                seed,
                ..cfg.clone()
            };
            let started = Instant::now();
            let result = search::run_weighted_search(fields, w, &cfg, grid)?;
            Ok(measure_run(&result, started.elapsed(), Some(seed)))
        })
        .collect::<Result<Vec<_>, SearchError>>()?;

    let verdicts = Verdicts::from_metrics(&runs, &brute, grid.cell_count());
    Ok(ComparisonReport {
        grid: GridDims {
            nx: grid.nx(),
            ny: grid.ny(),
        },
        m: w.len(),
        weights: w.values().to_vec(),
        threshold: cfg.threshold,
        weighted: WeightedSummary::from_runs(runs),
        brute,
        brute_best_cell: brute_result.best().map(|r| r.candidate),
        verdicts,
    })
}

impl ComparisonReport {
    /// Zeroes every timing so the report is reproducible byte for byte.
    pub fn without_timings(mut self) -> Self {
        self.brute.wall_time_s = 0.0;
        for run in &mut self.weighted.runs {
            run.wall_time_s = 0.0;
        }
        self.weighted.wall_time_s = Spread {
            min: 0.0,
            median: 0.0,
            max: 0.0,
        };
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned text table, one row per compared factor.
    pub fn to_table(&self) -> String {
        let yes = |b: bool| if b { "yes" } else { "no" };
        let w = &self.weighted;
        let b = &self.brute;
        let seeds = w.runs.len();
        let rows: Vec<[String; 3]> = vec![
            ["Factor".into(), "Weighted sum".into(), "Brute force".into()],
            [
                "Evaluations".into(),
                format!(
                    "{:.0} / {:.0} / {:.0}",
                    w.evaluations.min, w.evaluations.median, w.evaluations.max
                ),
                b.evaluations.to_string(),
            ],
            [
                "Wall time (s)".into(),
                format!(
                    "{:.6} / {:.6} / {:.6}",
                    w.wall_time_s.min, w.wall_time_s.median, w.wall_time_s.max
                ),
                format!("{:.6}", b.wall_time_s),
            ],
            [
                "Time complexity".into(),
                if self.verdicts.weighted_fewer_evaluations {
                    "Low"
                } else {
                    "Not lower"
                }
                .into(),
                "High".into(),
            ],
            [
                "Diversity (mean dist)".into(),
                format!(
                    "{:.6} / {:.6} / {:.6}",
                    w.diversity.min, w.diversity.median, w.diversity.max
                ),
                format!("{:.6}", b.diversity),
            ],
            [
                "Search space".into(),
                if self.verdicts.weighted_strict_subset {
                    "Random subset"
                } else {
                    "Random, all visited"
                }
                .into(),
                "All".into(),
            ],
            [
                "Best fitness".into(),
                format!(
                    "{:.9} / {:.9} / {:.9}",
                    w.best_fitness.min, w.best_fitness.median, w.best_fitness.max
                ),
                format!("{:.9}", b.best_fitness),
            ],
            [
                "Best feasible solution".into(),
                if self.verdicts.weighted_always_optimal {
                    format!(
                        "Reached ({}/{} seeds)",
                        self.verdicts.weighted_optimal_seeds, seeds
                    )
                } else {
                    format!(
                        "Not guaranteed ({}/{} seeds)",
                        self.verdicts.weighted_optimal_seeds, seeds
                    )
                },
                yes(self.verdicts.brute_optimal).to_string(),
            ],
            [
                "Accepted sites".into(),
                format!(
                    "{:.0} / {:.1} / {:.0}",
                    w.accepted_count.min, w.accepted_count.median, w.accepted_count.max
                ),
                b.accepted_count.to_string(),
            ],
        ];

        let widths: Vec<usize> = (0..3)
            .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let _ = writeln!(
            out,
            "grid {}x{}, m = {}, threshold = {:.9}, seeds = {} (weighted columns: min / median / max)",
            self.grid.nx, self.grid.ny, self.m, self.threshold, seeds
        );
        for (i, row) in rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "{:<w0$}  {:<w1$}  {}",
                row[0],
                row[1],
                row[2],
                w0 = widths[0],
                w1 = widths[1]
            );
            if i == 0 {
                let _ = writeln!(out, "{}", "-".repeat(widths[0] + widths[1] + widths[2] + 4));
            }
        }
        out
    }
}
