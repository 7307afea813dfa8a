//! Command-line front end: project config, command dispatch, the remark
//! store, and raster exports.
//!
//! Exit codes: 0 success with results, 1 success without results, 2 usage or
//! validation error.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{self, BenchError};
use crate::demo;
use crate::geodata::{self, BoundingBox, GeoError, GeoPoint, GridSpec, LayerKind, LayerSet};
use crate::scoring::{self, RawWeights, ScoreField, ScoringError, WeightVector};
use crate::search::{self, EvalRecord, Method, SearchConfig, SearchError, SearchResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NO_RESULTS: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

pub const REMARK_HEADER: &str = "run_id,timestamp,method,seed,col,row,x,y,fitness,accepted";
pub const RASTER_HEADER: &str = "col,row,x,y,fitness";
pub const ASCII_RAMP: &[u8; 10] = b" .:-=+*#%@";
pub const DETERMINISTIC_TIMESTAMP: &str = "DETERMINISTIC";
const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("weight count mismatch: {weights} weights for {layers} layers")]
    WeightCount { weights: usize, layers: usize },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKind,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_cut: Option<f64>,
    #[serde(default)]
    pub invert: bool,
}

fn default_padding() -> f64 {
    geodata::DEFAULT_PADDING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "default_padding")]
    pub padding: f64,
    /// Explicit `[min_x, min_y, max_x, max_y]`; overrides the layer extent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
}

/// Search knobs; the threshold lives at the top level of the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub population_size: usize,
    pub target_accepted: usize,
    pub crossover_points: usize,
    pub mutation_prob: f64,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl Default for SearchSection {
    fn default() -> Self {
        let d = SearchConfig::default();
        Self {
            population_size: d.population_size,
            target_accepted: d.target_accepted,
            crossover_points: d.crossover_points,
            mutation_prob: d.mutation_prob,
            max_evaluations: d.max_evaluations,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub remarks_path: PathBuf,
    #[serde(default)]
    pub deterministic_clock: bool,
    /// Path stem for comparison reports (`.txt` and `.json` are appended).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub version: u32,
    pub layers: Vec<LayerEntry>,
    pub grid: GridConfig,
    pub weights: Vec<f64>,
    pub threshold: f64,
    #[serde(default)]
    pub search: SearchSection,
    pub output: OutputConfig,
}

impl ProjectConfig {
    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            population_size: s.population_size,
            threshold: self.threshold,
            target_accepted: s.target_accepted,
            crossover_points: s.crossover_points,
            mutation_prob: s.mutation_prob,
            max_evaluations: s.max_evaluations,
            seed: s.seed,
        }
    }
}

/// A loaded project: parsed layers, grid, weights and score fields.
#[derive(Debug)]
pub struct Project {
    pub config: ProjectConfig,
    pub base_dir: PathBuf,
    pub layers: LayerSet,
    pub grid: GridSpec,
    pub raw_weights: RawWeights,
    pub weights: WeightVector,
    pub fields: Vec<ScoreField>,
}

impl Project {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let config: ProjectConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!(
                "{}:{}:{}: {e}",
                path.display(),
                e.line(),
                e.column()
            ))
        })?;
        if config.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "{}: unsupported config version {} (expected {CONFIG_VERSION})",
                path.display(),
                config.version
            )));
        }
        if config.weights.len() != config.layers.len() {
            return Err(CliError::WeightCount {
                weights: config.weights.len(),
                layers: config.layers.len(),
            });
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

        let layers = config
            .layers
            .iter()
            .map(|entry| {
                let d_cut = if entry.kind == LayerKind::Density {
                    None
                } else {
                    entry.d_cut
                };
                geodata::parse_layer_file(
                    base_dir.join(&entry.path),
                    &entry.name,
                    entry.kind,
                    d_cut,
                )
                .map(|l| l.inverted(entry.invert))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let layers = LayerSet::new(layers)?;

        let bbox = match config.grid.bbox {
            Some([x0, y0, x1, y1]) => {
                BoundingBox::new(GeoPoint::new(x0, y0)?, GeoPoint::new(x1, y1)?)?
            }
            None => geodata::compute_bounding_box(&layers, config.grid.padding),
        };
        let grid = GridSpec::new(bbox, config.grid.nx, config.grid.ny)?;
        let raw_weights = RawWeights::new(config.weights.clone())?;
        let weights = scoring::normalize_weights(&raw_weights)?;
        let fields = scoring::build_score_fields(&layers, &grid)?;

        Ok(Self {
            config,
            base_dir,
            layers,
            grid,
            raw_weights,
            weights,
            fields,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn remarks_path(&self) -> PathBuf {
        self.resolve(&self.config.output.remarks_path)
    }

    fn report_stem(&self) -> PathBuf {
        self.config
            .output
            .report_path
            .clone()
            .unwrap_or_else(|| PathBuf::from("comparison"))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "siteselect",
    version,
    about = "Weighted-sum industrial site selection over spatial constraint layers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    AsciiMap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    BruteForce,
    WeightedSum,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the config and every layer; report feature counts and the extent.
    Validate { config: PathBuf },
    /// Inspect features, scores and fitness at a location.
    Score {
        config: PathBuf,
        /// Query location as `x,y`.
        #[arg(long, value_parser = parse_xy, allow_hyphen_values = true)]
        at: GeoPoint,
    },
    /// Run the weighted-sum evolutionary search.
    Search {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate every cell.
    Brute { config: PathBuf },
    /// Compare both methods and write text and JSON reports.
    Compare {
        config: PathBuf,
        /// Comma-separated seeds; defaults to the config seed.
        #[arg(long, value_parser = parse_seed_list)]
        seeds: Option<SeedList>,
    },
    /// Export the fitness raster as CSV or an ASCII map.
    Export {
        config: PathBuf,
        #[arg(long, value_enum)]
        format: ExportFormat,
        /// `weighted-sum` shows only cells the search evaluated.
        #[arg(long, value_enum, default_value = "brute-force")]
        method: MethodArg,
        #[arg(long)]
        seed: Option<u64>,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-filter a remark store at a second threshold.
    Refilter {
        remarks: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        threshold: f64,
    },
    /// Write the six-layer demo dataset and a project config.
    InitDemo {
        dir: PathBuf,
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 8)]
        ny: usize,
    },
}

#[derive(Debug, Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(s: &str) -> Result<SeedList, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}")))
        .collect::<Result<_, _>>()
        .map(SeedList)
}

fn parse_xy(s: &str) -> Result<GeoPoint, String> {
    let (x, y) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let parse = |t: &str| {
        t.trim()
            .parse::<f64>()
            .map_err(|e| format!("bad coordinate `{t}`: {e}"))
    };
    GeoPoint::new(parse(x)?, parse(y)?).map_err(|e| e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match command {
        Command::Validate { config } => cmd_validate(&config, out),
        Command::Score { config, at } => cmd_score(&config, at, out),
        Command::Search { config, seed } => cmd_run(&config, Method::WeightedSum, seed, out),
        Command::Brute { config } => cmd_run(&config, Method::BruteForce, None, out),
        Command::Compare { config, seeds } => cmd_compare(&config, seeds.map(|s| s.0), out),
        Command::Export {
            config,
            format,
            method,
            seed,
            out: path,
        } => cmd_export(&config, format, method, seed, path.as_deref(), out),
        Command::Refilter { remarks, threshold } => cmd_refilter(&remarks, threshold, out),
        Command::InitDemo { dir, nx, ny } => {
            let path = demo::write_project(&dir, nx, ny).map_err(io_err(&dir))?;
            writeln!(out, "wrote demo project {}", path.display()).map_err(io_err(&dir))?;
            Ok(EXIT_OK)
        }
    }
}

fn stdout_err(e: io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    }
}

fn cmd_validate(config: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let project = Project::load(config)?;
    let mut text = String::new();
    for layer in project.layers.iter() {
        text += &format!(
            "layer {} ({}): {} features\n",
            layer.name(),
            layer.kind(),
            layer.features().len()
        );
    }
    let b = project.grid.bbox();
    text += &format!(
        "bbox: min ({}, {}) max ({}, {})\ngrid: {} x {} cells\n",
        b.min.x,
        b.min.y,
        b.max.x,
        b.max.y,
        project.grid.nx(),
        project.grid.ny()
    );
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn cmd_score(config: &Path, at: GeoPoint, out: &mut dyn Write) -> Result<i32, CliError> {
    let project = Project::load(config)?;
    let grid = &project.grid;
    let cell = grid.cell_containing(&at).ok_or_else(|| {
        CliError::Usage(format!(
            "point ({}, {}) is outside the bounding box {}",
            at.x,
            at.y,
            grid.bbox()
        ))
    })?;
    let center = geodata::cell_center(grid, cell)?;
    let scores = scoring::score_vector_at(&project.fields, cell)?;
    let fitness = scoring::aggregate(&project.weights, &scores)?;

    let mut text = format!("query x={} y={}\n", at.x, at.y);
    text += "features:\n";
    for report in geodata::query_features_at(&project.layers, &at) {
        text += &format!("  {report}\n");
    }
    text += &format!(
        "cell {} center x={:.6} y={:.6}\nscores:\n",
        cell, center.x, center.y
    );
    let width = project
        .layers
        .iter()
        .map(|l| l.name().len())
        .max()
        .unwrap_or(0);
    for ((layer, w), s) in project
        .layers
        .iter()
        .zip(project.weights.values())
        .zip(scores.values())
    {
        text += &format!(
            "  {:<width$}  weight {:.9}  score {:.9}\n",
            layer.name(),
            w,
            s
        );
    }
    text += &format!("fitness {:.9}\n", fitness.value());
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn run_method(
    project: &Project,
    method: Method,
    seed: Option<u64>,
) -> Result<SearchResult, CliError> {
    let mut cfg = project.config.search_config();
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(match method {
        Method::WeightedSum => {
            search::run_weighted_search(&project.fields, &project.weights, &cfg, &project.grid)?
        }
        Method::BruteForce => search::run_brute_force(
            &project.fields,
            &project.weights,
            cfg.threshold,
            &project.grid,
        )?,
    })
}

fn cmd_run(
    config: &Path,
    method: Method,
    seed: Option<u64>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let project = Project::load(config)?;
    let seed = match method {
        Method::WeightedSum => Some(seed.unwrap_or(project.config.search.seed)),
        Method::BruteForce => None,
    };
    let result = run_method(&project, method, seed)?;

    let store = RemarkStore::new(
        project.remarks_path(),
        project.config.output.deterministic_clock,
    );
    let run_id = store.append(method, seed, &result.accepted)?;

    let mut text = format!(
        "{method}: threshold {:.9}, {} evaluations, {} accepted (run {run_id})\n",
        result.threshold,
        result.evaluations_used,
        result.accepted.len()
    );
    for (rank, r) in result.accepted.iter().enumerate() {
        text += &format!(
            "{:>4}. cell {} at x={:.6} y={:.6} fitness {:.9}\n",
            rank + 1,
            r.candidate,
            r.center.x,
            r.center.y,
            r.fitness.value()
        );
    }
    text += &format!(
        "appended {} rows to {}\n",
        result.accepted.len(),
        project.config.output.remarks_path.display()
    );
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(if result.accepted.is_empty() {
        EXIT_NO_RESULTS
    } else {
        EXIT_OK
    })
}

fn cmd_compare(
    config: &Path,
    seeds: Option<Vec<u64>>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let project = Project::load(config)?;
    let seeds = seeds.unwrap_or_else(|| vec![project.config.search.seed]);
    let cfg = project.config.search_config();
    let mut report = bench::compare(
        &project.fields,
        &project.weights,
        &cfg,
        &project.grid,
        &seeds,
    )?;
    if project.config.output.deterministic_clock {
        report = report.without_timings();
    }
    let table = report.to_table();
    let stem = project.resolve(&project.report_stem());
    let txt = stem.with_extension("txt");
    let json = stem.with_extension("json");
    fs::write(&txt, &table).map_err(io_err(&txt))?;
    fs::write(&json, report.to_json() + "\n").map_err(io_err(&json))?;
    out.write_all(table.as_bytes()).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn cmd_export(
    config: &Path,
    format: ExportFormat,
    method: MethodArg,
    seed: Option<u64>,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let project = Project::load(config)?;
    let fitness = scoring::fitness_field(&project.fields, &project.weights)?;
    let mut visible = vec![true; fitness.len()];
    if let MethodArg::WeightedSum = method {
        let result = run_method(&project, Method::WeightedSum, seed)?;
        visible.fill(false);
        for r in &result.all_records {
            visible[project.grid.index_of(r.candidate)?] = true;
        }
    }
    let text = match format {
        ExportFormat::Csv => raster_csv(&project.grid, &fitness, &visible)?,
        ExportFormat::AsciiMap => ascii_map(&project.grid, &fitness, &visible),
    };
    match path {
        Some(p) => fs::write(p, text).map_err(io_err(p))?,
        None => out.write_all(text.as_bytes()).map_err(stdout_err)?,
    }
    Ok(EXIT_OK)
}

/// Per-cell raster rows in row-major order; hidden cells are skipped.
pub fn raster_csv(grid: &GridSpec, fitness: &[f64], visible: &[bool]) -> Result<String, CliError> {
    let mut text = format!("{RASTER_HEADER}\n");
    for (i, cell) in grid.cells().enumerate() {
        if !visible[i] {
            continue;
        }
        let c = geodata::cell_center(grid, cell)?;
        text += &format!(
            "{},{},{:.6},{:.6},{:.9}\n",
            cell.col, cell.row, c.x, c.y, fitness[i]
        );
    }
    Ok(text)
}

/// Glyph for a fitness value: its decile on the ramp, 1.0 on the last glyph.
pub fn ramp_glyph(fitness: f64) -> char {
    let idx = (fitness.clamp(0.0, 1.0) * 10.0).floor() as usize;
    ASCII_RAMP[idx.min(ASCII_RAMP.len() - 1)] as char
}

/// `ny` lines of `nx` glyphs, top row first; hidden cells print as `?`.
pub fn ascii_map(grid: &GridSpec, fitness: &[f64], visible: &[bool]) -> String {
    let mut text = String::with_capacity((grid.nx() + 1) * grid.ny());
    for row in (0..grid.ny()).rev() {
        for col in 0..grid.nx() {
            let i = row * grid.nx() + col;
            text.push(if visible[i] {
                ramp_glyph(fitness[i])
            } else {
                '?'
            });
        }
        text.push('\n');
    }
    text
}

fn cmd_refilter(remarks: &Path, threshold: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut reader = csv::Reader::from_path(remarks).map_err(|e| CliError::Io {
        path: remarks.to_path_buf(),
        source: io::Error::other(e),
    })?;
    let fitness_col = reader
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", remarks.display())))?
        .iter()
        .position(|h| h == "fitness")
        .ok_or_else(|| CliError::Config(format!("{}: no `fitness` column", remarks.display())))?;
    let mut text = format!("{REMARK_HEADER}\n");
    let mut kept = 0;
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", remarks.display())))?;
        let line = record.position().map_or(0, |p| p.line());
        let fitness: f64 = record[fitness_col]
            .parse()
            .map_err(|_| CliError::Config(format!("{}:{line}: bad fitness", remarks.display())))?;
        if fitness >= threshold {
            kept += 1;
            text += &record.iter().collect::<Vec<_>>().join(",");
            text.push('\n');
        }
    }
    out.write_all(text.as_bytes()).map_err(stdout_err)?;
    Ok(if kept == 0 { EXIT_NO_RESULTS } else { EXIT_OK })
}

/// Append-only CSV log of accepted sites, with a run counter kept alongside.
pub struct RemarkStore {
    path: PathBuf,
    deterministic_clock: bool,
}

impl RemarkStore {
    pub fn new(path: PathBuf, deterministic_clock: bool) -> Self {
        Self {
            path,
            deterministic_clock,
        }
    }

    pub fn counter_path(&self) -> PathBuf {
        let mut name = self
            .path
            .file_name()
            .map(OsString::from)
            .unwrap_or_default();
        name.push(".counter");
        self.path.with_file_name(name)
    }

    fn next_run_number(&self) -> Result<u64, CliError> {
        let counter = self.counter_path();
        let current = match fs::read_to_string(&counter) {
            Ok(s) => s.trim().parse::<u64>().map_err(|_| {
                CliError::Config(format!("{}: corrupt run counter", counter.display()))
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => 0,
            Err(e) => return Err(io_err(&counter)(e)),
        };
        let next = current + 1;
        fs::write(&counter, format!("{next}\n")).map_err(io_err(&counter))?;
        Ok(next)
    }

    /// Appends one row per record and returns the run id used.
    pub fn append(
        &self,
        method: Method,
        seed: Option<u64>,
        records: &[EvalRecord],
    ) -> Result<String, CliError> {
        let number = self.next_run_number()?;
        let seed_text = seed.map(|s| s.to_string()).unwrap_or_default();
        let run_id = format!(
            "{method}-{}-{number:06}",
            seed.map_or("none".to_string(), |s| s.to_string())
        );
        let timestamp = if self.deterministic_clock {
            DETERMINISTIC_TIMESTAMP.to_string()
        } else {
            chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
        };

        let needs_header = fs::metadata(&self.path)
            .map(|m| m.len() == 0)
            .unwrap_or(true);
        let mut text = String::new();
        if needs_header {
            text += REMARK_HEADER;
            text.push('\n');
        }
        for r in records {
            text += &format!(
                "{run_id},{timestamp},{method},{seed_text},{},{},{:.6},{:.6},{:.9},{}\n",
                r.candidate.col,
                r.candidate.row,
                r.center.x,
                r.center.y,
                r.fitness.value(),
                r.accepted
            );
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io_err(&self.path))?;
        file.write_all(text.as_bytes())
            .map_err(io_err(&self.path))?;
        Ok(run_id)
    }
}
