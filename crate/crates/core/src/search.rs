//! Site-finding drivers: the randomized weighted-sum evolutionary search and
//! the exhaustive scan it is measured against.
//!
//! Candidates are grid cells. For the genetic operators a cell is encoded as a
//! fixed-width bit string: `b` bits of column followed by `b` bits of row, most
//! significant bit first, with `b = ceil(log2(max(nx, ny)))` and at least 1.

use std::collections::HashSet;
use std::fmt;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{self, Cell, GeoError, GeoPoint, GridSpec};
use crate::scoring::{self, Fitness, ScoreField, ScoreVector, ScoringError, WeightVector};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("cannot draw {requested} distinct cells from a grid of {available}")]
    DistinctnessImpossible { requested: usize, available: usize },
    #[error("genome has {actual} bits, grid needs {expected}")]
    BadLength { expected: usize, actual: usize },
    #[error("cut count {k} is outside 1..={max}")]
    BadCutCount { k: usize, max: usize },
    #[error("invalid search config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
}

pub type Result<T, E = SearchError> = std::result::Result<T, E>;

/// The stream every stochastic step draws from.
pub type SearchRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SearchRng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "weighted-sum")]
    WeightedSum,
    #[serde(rename = "brute-force")]
    BruteForce,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::WeightedSum => "weighted-sum",
            Method::BruteForce => "brute-force",
        })
    }
}

/// A place in the discretized search space.
pub type Candidate = Cell;

/// Bits per axis for a grid.
pub fn axis_bits(grid: &GridSpec) -> usize {
    let side = grid.nx().max(grid.ny());
    let bits = usize::BITS - (side - 1).leading_zeros();
    (bits as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome(Vec<bool>);

impl Genome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self(bits)
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }
}

impl std::str::FromStr for Genome {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(format!("invalid bit `{other}`")),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Genome)
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn push_bits(bits: &mut Vec<bool>, value: usize, width: usize) {
    bits.extend((0..width).rev().map(|i| (value >> i) & 1 == 1));
}

fn read_bits(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

pub fn encode(cand: Candidate, grid: &GridSpec) -> Result<Genome> {
    grid.check(cand)?;
    let b = axis_bits(grid);
    let mut bits = Vec::with_capacity(2 * b);
    push_bits(&mut bits, cand.col, b);
    push_bits(&mut bits, cand.row, b);
    Ok(Genome(bits))
}

/// Reads col/row back out, clamping values past the grid edge onto it.
pub fn decode(g: &Genome, grid: &GridSpec) -> Result<Candidate> {
    let b = axis_bits(grid);
    if g.len() != 2 * b {
        return Err(SearchError::BadLength {
            expected: 2 * b,
            actual: g.len(),
        });
    }
    let col = read_bits(&g.0[..b]).min(grid.nx() - 1);
    let row = read_bits(&g.0[b..]).min(grid.ny() - 1);
    Ok(Cell::new(col, row))
}

/// Draws `population_size` distinct cells uniformly, redrawing duplicates.
pub fn random_init(
    population_size: usize,
    grid: &GridSpec,
    rng: &mut impl Rng,
) -> Result<Vec<Candidate>> {
    let available = grid.cell_count();
    if population_size > available {
        return Err(SearchError::DistinctnessImpossible {
            requested: population_size,
            available,
        });
    }
    let mut seen = HashSet::with_capacity(population_size);
    let mut population = Vec::with_capacity(population_size);
    while population.len() < population_size {
        let cell = Cell::new(
            rng.random_range(0..grid.nx()),
            rng.random_range(0..grid.ny()),
        );
        if seen.insert(cell) {
            population.push(cell);
        }
    }
    Ok(population)
}

/// Exchanges alternate segments between the sorted cut positions, starting
/// with the second segment.
pub fn crossover_at(a: &Genome, b: &Genome, cuts: &[usize]) -> Result<(Genome, Genome)> {
    let len = a.len();
    if b.len() != len {
        return Err(SearchError::BadLength {
            expected: len,
            actual: b.len(),
        });
    }
    let max = len.saturating_sub(1);
    if cuts.is_empty() || cuts.len() > max || cuts.iter().any(|&c| c == 0 || c >= len) {
        return Err(SearchError::BadCutCount { k: cuts.len(), max });
    }
    let mut sorted = cuts.to_vec();
    sorted.sort_unstable();
    sorted.dedup();

    let (mut x, mut y) = (a.0.clone(), b.0.clone());
    let mut start = 0;
    for (segment, end) in sorted.iter().copied().chain([len]).enumerate() {
        if segment % 2 == 1 {
            x[start..end].swap_with_slice(&mut y[start..end]);
        }
        start = end;
    }
    Ok((Genome(x), Genome(y)))
}

/// `k`-point crossover with cut positions drawn without replacement from `1..L`.
pub fn multipoint_crossover(
    a: &Genome,
    b: &Genome,
    k: usize,
    rng: &mut impl Rng,
) -> Result<(Genome, Genome)> {
    let len = a.len();
    if b.len() != len {
        return Err(SearchError::BadLength {
            expected: len,
            actual: b.len(),
        });
    }
    let max = len.saturating_sub(1);
    if k == 0 || k > max {
        return Err(SearchError::BadCutCount { k, max });
    }
    let mut cuts: Vec<usize> = index::sample(rng, max, k)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    crossover_at(a, b, &cuts)
}

pub fn swap_bits(g: &Genome, i: usize, j: usize) -> Genome {
    let mut bits = g.0.clone();
    bits.swap(i, j);
    Genome(bits)
}

/// Exchanges the values at two distinct, uniformly drawn positions.
pub fn swap_mutation(g: &Genome, rng: &mut impl Rng) -> Genome {
    let len = g.len();
    if len < 2 {
        return g.clone();
    }
    let i = rng.random_range(0..len);
    let mut j = rng.random_range(0..len - 1);
    if j >= i {
        j += 1;
    }
    swap_bits(g, i, j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub population_size: usize,
    pub threshold: f64,
    pub target_accepted: usize,
    pub crossover_points: usize,
    pub mutation_prob: f64,
    pub max_evaluations: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 16,
            threshold: 0.5,
            target_accepted: 5,
            crossover_points: 2,
            mutation_prob: 0.2,
            max_evaluations: 2000,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        let invalid = |msg: String| Err(SearchError::InvalidConfig(msg));
        if self.population_size < 2 {
            return invalid(format!(
                "population_size {} must be at least 2",
                self.population_size
            ));
        }
        if self.target_accepted == 0 {
            return invalid("target_accepted must be positive".into());
        }
        if self.max_evaluations == 0 {
            return invalid("max_evaluations must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return invalid(format!(
                "mutation_prob {} is outside [0, 1]",
                self.mutation_prob
            ));
        }
        if !self.threshold.is_finite() {
            return invalid("threshold must be finite".into());
        }
        let max = 2 * axis_bits(grid) - 1;
        if self.crossover_points == 0 || self.crossover_points > max {
            return Err(SearchError::BadCutCount {
                k: self.crossover_points,
                max,
            });
        }
        Ok(())
    }
}

/// One row of the evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRecord {
    pub candidate: Candidate,
    pub center: GeoPoint,
    pub scores: ScoreVector,
    pub fitness: Fitness,
    pub accepted: bool,
    pub eval_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub method: Method,
    pub threshold: f64,
    /// Accepted sites, best first; equal fitness keeps evaluation order.
    pub accepted: Vec<EvalRecord>,
    pub evaluations_used: usize,
    pub all_records: Vec<EvalRecord>,
}

impl SearchResult {
    pub fn best(&self) -> Option<&EvalRecord> {
        self.all_records.iter().reduce(|best, r| {
            if r.fitness.0 > best.fitness.0 {
                r
            } else {
                best
            }
        })
    }
}

/// Scores candidates against fixed fields and appends to the log.
struct Evaluator<'a> {
    fields: &'a [ScoreField],
    weights: &'a WeightVector,
    grid: &'a GridSpec,
    threshold: f64,
    records: Vec<EvalRecord>,
}

impl<'a> Evaluator<'a> {
    fn new(
        fields: &'a [ScoreField],
        weights: &'a WeightVector,
        grid: &'a GridSpec,
        threshold: f64,
    ) -> Self {
        Self {
            fields,
            weights,
            grid,
            threshold,
            records: Vec::new(),
        }
    }

    fn evaluate(&mut self, cand: Candidate) -> Result<&EvalRecord> {
        let scores = scoring::score_vector_at(self.fields, cand)?;
        let fitness = scoring::aggregate(self.weights, &scores)?;
        let record = EvalRecord {
            candidate: cand,
            center: geodata::cell_center(self.grid, cand)?,
            scores,
            fitness,
            accepted: fitness.0 >= self.threshold,
            eval_index: self.records.len(),
        };
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    fn finish(self, method: Method, mut accepted: Vec<EvalRecord>) -> SearchResult {
        sort_ranked(&mut accepted);
        SearchResult {
            method,
            threshold: self.threshold,
            accepted,
            evaluations_used: self.records.len(),
            all_records: self.records,
        }
    }
}

/// Fitness descending, then evaluation order.
fn sort_ranked(records: &mut [EvalRecord]) {
    records.sort_by(|a, b| {
        b.fitness
            .0
            .total_cmp(&a.fitness.0)
            .then(a.eval_index.cmp(&b.eval_index))
    });
}

fn check_fields(fields: &[ScoreField], w: &WeightVector, grid: &GridSpec) -> Result<()> {
    if fields.len() != w.len() {
        return Err(ScoringError::LengthMismatch {
            weights: w.len(),
            scores: fields.len(),
        }
        .into());
    }
    if let Some(f) = fields.iter().find(|f| f.grid != *grid) {
        return Err(SearchError::InvalidConfig(format!(
            "score field `{}` was built on a different grid",
            f.layer_name
        )));
    }
    Ok(())
}

/// Randomized weighted-sum search.
///
/// Each generation is evaluated in order; sites at or above the threshold go
/// into the accepted archive (first record per distinct cell). The run stops
/// once the archive holds `target_accepted` sites or the evaluation budget is
/// spent. Otherwise the population is shuffled into pairs (an odd member is
/// carried over), each pair is crossed over, each child is swap-mutated with
/// probability `mutation_prob`, and the decoded children form the next
/// generation. Children may revisit cells; every evaluation is logged.
pub fn run_weighted_search(
    fields: &[ScoreField],
    w: &WeightVector,
    cfg: &SearchConfig,
    grid: &GridSpec,
) -> Result<SearchResult> {
    check_fields(fields, w, grid)?;
    cfg.validate(grid)?;
    let mut rng = seeded_rng(cfg.seed);
    let mut population = random_init(cfg.population_size, grid, &mut rng)?;

    let mut eval = Evaluator::new(fields, w, grid, cfg.threshold);
    let mut accepted: Vec<EvalRecord> = Vec::new();
    let mut accepted_cells = HashSet::new();

    loop {
        for &cand in &population {
            if eval.records.len() >= cfg.max_evaluations {
                break;
            }
            let record = eval.evaluate(cand)?;
            if record.accepted && accepted_cells.insert(record.candidate) {
                accepted.push(record.clone());
            }
        }
        if accepted.len() >= cfg.target_accepted || eval.records.len() >= cfg.max_evaluations {
            break;
        }
        population = next_generation(population, cfg, grid, &mut rng)?;
    }

    Ok(eval.finish(Method::WeightedSum, accepted))
}

fn next_generation(
    mut population: Vec<Candidate>,
    cfg: &SearchConfig,
    grid: &GridSpec,
    rng: &mut SearchRng,
) -> Result<Vec<Candidate>> {
    population.shuffle(rng);
    let mut next = Vec::with_capacity(population.len());
    let mut pairs = population.chunks_exact(2);
    for pair in pairs.by_ref() {
        let (a, b) = (encode(pair[0], grid)?, encode(pair[1], grid)?);
        let (c1, c2) = multipoint_crossover(&a, &b, cfg.crossover_points, rng)?;
        for child in [c1, c2] {
            let child = if rng.random_bool(cfg.mutation_prob) {
                swap_mutation(&child, rng)
            } else {
                child
            };
            next.push(decode(&child, grid)?);
        }
    }
    next.extend_from_slice(pairs.remainder());
    Ok(next)
}

/// Evaluates every cell once in row-major order and ranks those meeting the threshold.
pub fn run_brute_force(
    fields: &[ScoreField],
    w: &WeightVector,
    threshold: f64,
    grid: &GridSpec,
) -> Result<SearchResult> {
    check_fields(fields, w, grid)?;
    let mut eval = Evaluator::new(fields, w, grid, threshold);
    let mut accepted = Vec::new();
    for cell in grid.cells() {
        let record = eval.evaluate(cell)?;
        if record.accepted {
            accepted.push(record.clone());
        }
    }
    Ok(eval.finish(Method::BruteForce, accepted))
}
