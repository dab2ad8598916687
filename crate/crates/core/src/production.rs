//! Speaking: from an intended meaning to a word form.
//!
//! A what-system predicts how strongly each cue is supported, [`weave`]
//! chains the supported cues into candidate forms, and
//! [`synthesize_by_analysis`] keeps the candidate whose comprehended
//! meaning correlates best with the intended one.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::{CueError, CueInventory, FormMatrix, BOUNDARY};
use crate::embeddings::SemanticMatrix;
use crate::linalg::pearson;
use crate::mappings::{FeedforwardNetwork, LinearMapping, MappingError};

#[derive(Debug, Error)]
pub enum ProductionError {
    #[error("cue `{0}` has the wrong gram size")]
    GramSize(String),
    #[error("no candidate forms could be woven")]
    NoProduction,
    #[error("expected a vector of length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{0} targets for {1} meaning rows")]
    RowMismatch(usize, usize),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Cue(#[from] CueError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A cue together with the support the what-system assigns to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportedCue {
    pub cue: String,
    pub support: f64,
}

/// Cues whose predicted support exceeds `threshold`, in column order.
pub fn select_cues(
    predicted: &[f64],
    inventory: &CueInventory,
    threshold: f64,
) -> Result<Vec<SupportedCue>, ProductionError> {
    if predicted.len() != inventory.len() {
        return Err(ProductionError::Dimension {
            expected: inventory.len(),
            found: predicted.len(),
        });
    }
    Ok(predicted
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(c, &s)| SupportedCue {
            cue: inventory.cue(c).to_string(),
            support: s,
        })
        .collect())
}

/// Limits on the weaver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeaveLimits {
    /// Longest surface (in characters) a path may spell.
    pub max_length: usize,
    /// Largest number of candidates kept; beyond it the weaver switches to
    /// best-first expansion by summed cue support.
    pub max_candidates: usize,
    /// Bound on visited path prefixes, for each search strategy.
    pub max_expansions: usize,
}

impl Default for WeaveLimits {
    fn default() -> Self {
        WeaveLimits {
            max_length: 25,
            max_candidates: 10_000,
            max_expansions: 2_000_000,
        }
    }
}

/// One woven form and the cues it was chained from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WovenForm {
    pub surface: String,
    pub cue_path: Vec<String>,
    /// Sum of the supports of the cues on the path.
    pub path_support: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeaveOutcome {
    /// Sorted by surface.
    pub candidates: Vec<WovenForm>,
    /// The exhaustive search hit a limit and best-first expansion was used.
    pub truncated: bool,
    pub missing_initial: bool,
    pub missing_final: bool,
}

struct Graph {
    n: usize,
    cues: Vec<Vec<char>>,
    names: Vec<String>,
    support: Vec<f64>,
    starts: Vec<usize>,
    next: Vec<Vec<usize>>,
}

impl Graph {
    fn new(cues: &[SupportedCue]) -> Result<Option<Graph>, ProductionError> {
        let mut sorted: Vec<&SupportedCue> = cues.iter().collect();
        sorted.sort_by(|a, b| a.cue.cmp(&b.cue));
        sorted.dedup_by(|a, b| a.cue == b.cue);
        let Some(first) = sorted.first() else {
            return Ok(None);
        };
        let n = first.cue.chars().count();
        if n < 2 {
            return Err(ProductionError::GramSize(first.cue.clone()));
        }
        let chars: Vec<Vec<char>> = sorted.iter().map(|c| c.cue.chars().collect()).collect();
        if let Some((i, _)) = chars.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(ProductionError::GramSize(sorted[i].cue.clone()));
        }
        let mut by_prefix: HashMap<&[char], Vec<usize>> = HashMap::new();
        for (i, c) in chars.iter().enumerate() {
            if c[0] != BOUNDARY {
                by_prefix.entry(&c[..n - 1]).or_default().push(i);
            }
        }
        let next = chars
            .iter()
            .map(|c| {
                if c[n - 1] == BOUNDARY {
                    Vec::new()
                } else {
                    by_prefix.get(&c[1..]).cloned().unwrap_or_default()
                }
            })
            .collect();
        let starts = (0..chars.len()).filter(|&i| chars[i][0] == BOUNDARY).collect();
        Ok(Some(Graph {
            n,
            names: sorted.iter().map(|c| c.cue.clone()).collect(),
            support: sorted.iter().map(|c| c.support).collect(),
            cues: chars,
            starts,
            next,
        }))
    }

    fn is_final(&self, cue: usize) -> bool {
        self.cues[cue][self.n - 1] == BOUNDARY
    }

    /// Characters of the surface spelled so far, excluding boundaries.
    fn spelled(&self, path_len: usize, complete: bool) -> usize {
        (path_len + self.n - 2).saturating_sub(usize::from(complete))
    }

    fn form(&self, path: &[usize]) -> WovenForm {
        let mut surface: String = self.cues[path[0]][1..].iter().collect();
        for &c in &path[1..] {
            surface.push(self.cues[c][self.n - 1]);
        }
        if surface.ends_with(BOUNDARY) {
            surface.pop();
        }
        WovenForm {
            surface,
            cue_path: path.iter().map(|&c| self.names[c].clone()).collect(),
            path_support: path.iter().map(|&c| self.support[c]).sum(),
        }
    }
}

enum Search {
    Done(Vec<Vec<usize>>),
    Exceeded,
}

fn exhaustive(g: &Graph, limits: &WeaveLimits) -> Search {
    let mut found = Vec::new();
    let mut expansions = 0usize;
    let mut stack: Vec<Vec<usize>> = g.starts.iter().rev().map(|&s| vec![s]).collect();
    while let Some(path) = stack.pop() {
        expansions += 1;
        if expansions > limits.max_expansions {
            return Search::Exceeded;
        }
        let last = *path.last().unwrap();
        if g.is_final(last) {
            if g.spelled(path.len(), true) <= limits.max_length {
                found.push(path);
                if found.len() > limits.max_candidates {
                    return Search::Exceeded;
                }
            }
            continue;
        }
        for &c in g.next[last].iter().rev() {
            let complete = g.is_final(c);
            if g.spelled(path.len() + 1, complete) <= limits.max_length {
                let mut p = path.clone();
                p.push(c);
                stack.push(p);
            }
        }
    }
    Search::Done(found)
}

struct Frontier {
    score: f64,
    path: Vec<usize>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher score first, then the lexicographically smaller path
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.path.cmp(&self.path))
    }
}

fn best_first(g: &Graph, limits: &WeaveLimits) -> Vec<Vec<usize>> {
    let mut heap: BinaryHeap<Frontier> = g
        .starts
        .iter()
        .map(|&s| Frontier {
            score: g.support[s],
            path: vec![s],
        })
        .collect();
    let mut found = Vec::new();
    let mut expansions = 0usize;
    while let Some(Frontier { score, path }) = heap.pop() {
        expansions += 1;
        if expansions > limits.max_expansions || found.len() >= limits.max_candidates {
            break;
        }
        let last = *path.last().unwrap();
        if g.is_final(last) {
            if g.spelled(path.len(), true) <= limits.max_length {
                found.push(path);
            }
            continue;
        }
        for &c in &g.next[last] {
            if g.spelled(path.len() + 1, g.is_final(c)) <= limits.max_length {
                let mut p = path.clone();
                p.push(c);
                heap.push(Frontier {
                    score: score + g.support[c],
                    path: p,
                });
            }
        }
    }
    found
}

/// Chain cues that overlap in all but one character into word forms, from
/// a boundary-initial to a boundary-final cue. Cues may repeat along a path.
pub fn weave(cues: &[SupportedCue], limits: &WeaveLimits) -> Result<WeaveOutcome, ProductionError> {
    let Some(g) = Graph::new(cues)? else {
        return Ok(WeaveOutcome {
            missing_initial: true,
            missing_final: true,
            ..Default::default()
        });
    };
    let missing_initial = g.starts.is_empty();
    let missing_final = !(0..g.cues.len()).any(|c| g.is_final(c));
    if missing_initial || missing_final {
        return Ok(WeaveOutcome {
            candidates: Vec::new(),
            truncated: false,
            missing_initial,
            missing_final,
        });
    }
    let (paths, truncated) = match exhaustive(&g, limits) {
        Search::Done(p) => (p, false),
        Search::Exceeded => (best_first(&g, limits), true),
    };
    let mut candidates: Vec<WovenForm> = paths.iter().map(|p| g.form(p)).collect();
    candidates.sort_by(|a, b| a.surface.cmp(&b.surface));
    candidates.dedup_by(|a, b| a.surface == b.surface);
    Ok(WeaveOutcome {
        candidates,
        truncated,
        missing_initial,
        missing_final,
    })
}

/// Weave plain cue strings, each with unit support.
pub fn weave_cues<S: AsRef<str>>(cues: &[S], max_length: usize) -> Result<WeaveOutcome, ProductionError> {
    let supported: Vec<SupportedCue> = cues
        .iter()
        .map(|c| SupportedCue {
            cue: c.as_ref().to_string(),
            support: 1.0,
        })
        .collect();
    weave(
        &supported,
        &WeaveLimits {
            max_length,
            ..WeaveLimits::default()
        },
    )
}

/// A candidate scored by synthesis-by-analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionCandidate {
    pub surface: String,
    pub cue_path: Vec<String>,
    /// Correlation of the candidate's comprehended meaning with the
    /// intended meaning; NaN when undefined.
    pub support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesis {
    pub best: ProductionCandidate,
    /// Best first.
    pub ranked: Vec<ProductionCandidate>,
    /// The runner-up has exactly the best support.
    pub tie: bool,
}

fn rank_key(c: &ProductionCandidate) -> f64 {
    if c.support.is_nan() {
        f64::NEG_INFINITY
    } else {
        c.support
    }
}

/// Comprehend each candidate and keep the one whose meaning correlates best
/// with `intended`. Ties go to the shorter surface, then the
/// lexicographically smaller one.
pub fn synthesize_by_analysis<S: AsRef<str>>(
    candidates: &[S],
    comprehension: &LinearMapping,
    inventory: &CueInventory,
    intended: &[f64],
) -> Result<Synthesis, ProductionError> {
    if comprehension.input_dims() != inventory.len() {
        return Err(ProductionError::Dimension {
            expected: inventory.len(),
            found: comprehension.input_dims(),
        });
    }
    if intended.len() != comprehension.output_dims() {
        return Err(ProductionError::Dimension {
            expected: comprehension.output_dims(),
            found: intended.len(),
        });
    }
    let mut ranked = candidates
        .iter()
        .map(|s| {
            let surface = s.as_ref();
            let (cols, _) = inventory.encode(surface)?;
            let meaning = comprehension.apply_cues(&cols);
            let cue_path = crate::cues::extract_ngrams(surface, inventory.gram_size())?;
            Ok(ProductionCandidate {
                surface: surface.to_string(),
                cue_path,
                support: pearson(&meaning, intended).unwrap_or(f64::NAN),
            })
        })
        .collect::<Result<Vec<_>, ProductionError>>()?;
    ranked.sort_by(|a, b| {
        rank_key(b)
            .total_cmp(&rank_key(a))
            .then_with(|| a.surface.chars().count().cmp(&b.surface.chars().count()))
            .then_with(|| a.surface.cmp(&b.surface))
    });
    ranked.dedup_by(|a, b| a.surface == b.surface);
    let best = ranked.first().cloned().ok_or(ProductionError::NoProduction)?;
    let tie = ranked.get(1).is_some_and(|c| rank_key(c) == rank_key(&best));
    Ok(Synthesis { best, ranked, tie })
}

/// Anything that maps a meaning vector onto cue supports.
pub trait WhatSystem: Sync {
    fn predict_form(&self, meaning: &[f64]) -> Result<Vec<f64>, ProductionError>;
}

impl WhatSystem for LinearMapping {
    fn predict_form(&self, meaning: &[f64]) -> Result<Vec<f64>, ProductionError> {
        Ok(self.apply_vector(meaning)?)
    }
}

impl WhatSystem for FeedforwardNetwork {
    fn predict_form(&self, meaning: &[f64]) -> Result<Vec<f64>, ProductionError> {
        Ok(self.forward(meaning)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProductionConfig {
    pub threshold: f64,
    #[serde(flatten)]
    pub limits: WeaveLimits,
}

impl Default for ProductionConfig {
    fn default() -> Self {
        ProductionConfig {
            threshold: 0.01,
            limits: WeaveLimits::default(),
        }
    }
}

/// Result of producing one word.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub synthesis: Option<Synthesis>,
    pub weave: WeaveOutcome,
}

impl Production {
    pub fn emitted(&self) -> Option<&str> {
        self.synthesis.as_ref().map(|s| s.best.surface.as_str())
    }
}

/// Weave and synthesize from an already predicted form vector.
pub fn produce_from_form(
    form: &[f64],
    intended: &[f64],
    comprehension: &LinearMapping,
    inventory: &CueInventory,
    config: &ProductionConfig,
) -> Result<Production, ProductionError> {
    let cues = select_cues(form, inventory, config.threshold)?;
    let weave = weave(&cues, &config.limits)?;
    let synthesis = if weave.candidates.is_empty() {
        None
    } else {
        let surfaces: Vec<&str> = weave.candidates.iter().map(|c| c.surface.as_str()).collect();
        Some(synthesize_by_analysis(&surfaces, comprehension, inventory, intended)?)
    };
    Ok(Production { synthesis, weave })
}

/// Full pipeline; `Err(NoProduction)` when nothing could be woven.
pub fn produce(
    intended: &[f64],
    what: &dyn WhatSystem,
    comprehension: &LinearMapping,
    inventory: &CueInventory,
    config: &ProductionConfig,
) -> Result<ProductionCandidate, ProductionError> {
    let form = what.predict_form(intended)?;
    let p = produce_from_form(&form, intended, comprehension, inventory, config)?;
    p.synthesis.map(|s| s.best).ok_or(ProductionError::NoProduction)
}

/// Where the form vectors fed to the weaver come from.
#[derive(Clone, Copy)]
pub enum FormSource<'a> {
    /// Row i of the matrix belongs to meaning row i.
    Gold(&'a FormMatrix),
    Predicted(&'a dyn WhatSystem),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionRecord {
    pub key: String,
    pub target: String,
    pub emitted: Option<String>,
    pub support: Option<f64>,
    pub n_candidates: usize,
    /// 1-based position of the target among the ranked candidates.
    pub target_rank: Option<usize>,
    pub correct: bool,
    pub tie: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionSummary {
    pub n: usize,
    pub accuracy_at_1: f64,
    pub accuracy_at_10: f64,
    pub no_production: usize,
    pub truncated: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductionReport {
    pub records: Vec<ProductionRecord>,
    pub summary: ProductionSummary,
}

impl ProductionReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ProductionError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "key",
            "emitted",
            "target",
            "support",
            "n_candidates",
            "correct",
            "target_rank",
        ])?;
        for r in &self.records {
            wtr.write_record([
                r.key.clone(),
                r.emitted.clone().unwrap_or_default(),
                r.target.clone(),
                r.support
                    .filter(|s| !s.is_nan())
                    .map(|s| format!("{s:.6}"))
                    .unwrap_or_else(|| "NA".into()),
                r.n_candidates.to_string(),
                u8::from(r.correct).to_string(),
                r.target_rank.map(|k| k.to_string()).unwrap_or_else(|| "NA".into()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Produce every row of `meanings`; `targets[i]` is the surface the speaker
/// should say for row i. Words are produced in parallel.
pub fn produce_batch<S: AsRef<str> + Sync>(
    meanings: &SemanticMatrix,
    targets: &[S],
    source: FormSource<'_>,
    comprehension: &LinearMapping,
    inventory: &CueInventory,
    config: &ProductionConfig,
) -> Result<ProductionReport, ProductionError> {
    if targets.len() != meanings.nrows() {
        return Err(ProductionError::RowMismatch(targets.len(), meanings.nrows()));
    }
    if let FormSource::Gold(f) = source {
        if f.nrows() != meanings.nrows() {
            return Err(ProductionError::RowMismatch(f.nrows(), meanings.nrows()));
        }
        if f.ncols() != inventory.len() {
            return Err(ProductionError::Dimension {
                expected: inventory.len(),
                found: f.ncols(),
            });
        }
    }
    let records = (0..meanings.nrows())
        .into_par_iter()
        .map(|i| {
            let intended = meanings.row(i);
            let form = match source {
                FormSource::Gold(f) => f.dense_row(i),
                FormSource::Predicted(w) => w.predict_form(&intended)?,
            };
            let p = produce_from_form(&form, &intended, comprehension, inventory, config)?;
            let target = targets[i].as_ref();
            let (emitted, support, target_rank, tie) = match &p.synthesis {
                Some(s) => (
                    Some(s.best.surface.clone()),
                    Some(s.best.support),
                    s.ranked.iter().position(|c| c.surface == target).map(|k| k + 1),
                    s.tie,
                ),
                None => (None, None, None, false),
            };
            Ok(ProductionRecord {
                key: meanings.row_ids()[i].clone(),
                target: target.to_string(),
                correct: emitted.as_deref() == Some(target),
                emitted,
                support,
                n_candidates: p.weave.candidates.len(),
                target_rank,
                tie,
                truncated: p.weave.truncated,
            })
        })
        .collect::<Result<Vec<_>, ProductionError>>()?;
    let n = records.len();
    let frac = |k: usize| {
        if n == 0 {
            0.0
        } else {
            records.iter().filter(|r| r.target_rank.is_some_and(|x| x <= k)).count() as f64 / n as f64
        }
    };
    let summary = ProductionSummary {
        n,
        accuracy_at_1: if n == 0 {
            0.0
        } else {
            records.iter().filter(|r| r.correct).count() as f64 / n as f64
        },
        accuracy_at_10: frac(10),
        no_production: records.iter().filter(|r| r.emitted.is_none()).count(),
        truncated: records.iter().filter(|r| r.truncated).count(),
        ties: records.iter().filter(|r| r.tie).count(),
    };
    Ok(ProductionReport { records, summary })
}
