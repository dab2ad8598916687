//! Nearest-neighbour evaluation of predicted vectors.
//!
//! A prediction is correct when its gold row is the most correlated row in
//! the candidate pool. Ties go to the lower row index; identical gold rows
//! therefore shadow one another and are reported as tied.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cues::FormMatrix;
use crate::embeddings::SemanticMatrix;
use crate::linalg::{pearson, standardize};

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("vectors must have equal length of at least 2 (got {0} and {1})")]
    Length(usize, usize),
    #[error("correlation is undefined for a constant vector")]
    Undefined,
    #[error("k = {k} exceeds the pool size {pool}")]
    KTooLarge { k: usize, pool: usize },
    #[error("k must be at least 1")]
    KZero,
    #[error("target row {target} is not in the pool of {pool} rows")]
    MissingTarget { target: usize, pool: usize },
    #[error("{predicted} predicted rows but {expected} targets/frequencies")]
    RowMismatch { predicted: usize, expected: usize },
    #[error("predicted vectors have {found} columns, the pool has {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Pearson correlation between a predicted and a gold vector.
pub fn target_correlation(predicted: &[f64], gold: &[f64]) -> Result<f64, EvaluationError> {
    if predicted.len() != gold.len() || predicted.len() < 2 {
        return Err(EvaluationError::Length(predicted.len(), gold.len()));
    }
    pearson(predicted, gold).ok_or(EvaluationError::Undefined)
}

/// Candidate pool of gold vectors.
#[derive(Debug, Clone, Copy)]
pub enum Gold<'a> {
    Semantic(&'a SemanticMatrix),
    Form(&'a FormMatrix),
}

impl Gold<'_> {
    pub fn nrows(&self) -> usize {
        match self {
            Gold::Semantic(s) => s.nrows(),
            Gold::Form(f) => f.nrows(),
        }
    }

    pub fn dims(&self) -> usize {
        match self {
            Gold::Semantic(s) => s.dims(),
            Gold::Form(f) => f.ncols(),
        }
    }

    pub fn row_id(&self, i: usize) -> &str {
        match self {
            Gold::Semantic(s) => &s.row_ids()[i],
            Gold::Form(f) => &f.row_ids()[i],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordResult {
    pub key: String,
    /// Row of the gold vector in the pool.
    pub target: usize,
    /// Correlation with the gold vector; 0 when undefined.
    pub target_correlation: f64,
    pub rank: usize,
    pub correct_at_1: bool,
    pub correct_at_k: bool,
    /// Other pool rows with exactly the target's correlation.
    pub tied: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n: usize,
    pub pool: usize,
    pub k: usize,
    pub type_accuracy_at_1: f64,
    pub type_accuracy_at_k: f64,
    pub token_accuracy_at_1: Option<f64>,
    pub tied_targets: usize,
    pub undefined_correlations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_word: Vec<WordResult>,
    pub summary: EvaluationSummary,
}

impl EvaluationReport {
    /// Per-word CSV: key, correlation, rank, correct@1, correct@k, tied.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvaluationError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["key", "correlation", "rank", "correct_at_1", "correct_at_k", "tied"])?;
        for r in &self.per_word {
            wtr.write_record([
                r.key.clone(),
                format!("{:.6}", r.target_correlation),
                r.rank.to_string(),
                u8::from(r.correct_at_1).to_string(),
                u8::from(r.correct_at_k).to_string(),
                r.tied.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Accuracy at an arbitrary cut-off, from the stored ranks.
    pub fn accuracy_at(&self, k: usize) -> f64 {
        if self.per_word.is_empty() {
            return 0.0;
        }
        self.per_word.iter().filter(|r| r.rank <= k).count() as f64 / self.per_word.len() as f64
    }
}

/// Rows with bitwise-identical content share a group; correlations are
/// computed once per group.
struct PoolGroups {
    group_of: Vec<usize>,
    members: Vec<Vec<usize>>,
}

fn group_rows<K: std::hash::Hash + Eq>(keys: impl Iterator<Item = K>) -> PoolGroups {
    let mut map: HashMap<K, usize> = HashMap::new();
    let mut group_of = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, k) in keys.enumerate() {
        let next = members.len();
        let g = *map.entry(k).or_insert(next);
        if g == next {
            members.push(Vec::new());
        }
        members[g].push(i);
        group_of.push(g);
    }
    PoolGroups { group_of, members }
}

const BLOCK: usize = 256;

/// Correlations of every predicted row with every pool group, NaN when
/// undefined.
fn group_correlations(predicted: &DMatrix<f64>, pool: Gold<'_>, groups: &PoolGroups) -> Vec<Vec<f64>> {
    let reps: Vec<usize> = groups.members.iter().map(|m| m[0]).collect();
    match pool {
        Gold::Semantic(s) => {
            let d = s.dims();
            let mut defined = vec![true; reps.len()];
            let mut std_gold = DMatrix::zeros(d, reps.len());
            for (g, &r) in reps.iter().enumerate() {
                match standardize(&s.row(r)) {
                    Some(v) => std_gold.column_mut(g).copy_from_slice(&v),
                    None => defined[g] = false,
                }
            }
            let rows: Vec<usize> = (0..predicted.nrows()).collect();
            rows.par_chunks(BLOCK)
                .flat_map_iter(|chunk| {
                    let mut block = DMatrix::zeros(chunk.len(), d);
                    let mut ok = vec![true; chunk.len()];
                    for (b, &i) in chunk.iter().enumerate() {
                        let row: Vec<f64> = predicted.row(i).iter().copied().collect();
                        match standardize(&row) {
                            Some(v) => block.row_mut(b).copy_from_slice(&v),
                            None => ok[b] = false,
                        }
                    }
                    let corr = &block * &std_gold;
                    (0..chunk.len())
                        .map(|b| {
                            (0..reps.len())
                                .map(|g| {
                                    if ok[b] && defined[g] {
                                        corr[(b, g)].clamp(-1.0, 1.0)
                                    } else {
                                        f64::NAN
                                    }
                                })
                                .collect::<Vec<_>>()
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        }
        Gold::Form(f) => {
            let d = f.ncols() as f64;
            (0..predicted.nrows())
                .into_par_iter()
                .map(|i| {
                    let p: Vec<f64> = predicted.row(i).iter().copied().collect();
                    let mean = p.iter().sum::<f64>() / d;
                    let ss: f64 = p.iter().map(|x| (x - mean) * (x - mean)).sum();
                    reps.iter()
                        .map(|&r| {
                            let cols = f.row(r);
                            let m = cols.len() as f64;
                            let gold_ss = m * (1.0 - m / d);
                            if ss == 0.0 || gold_ss <= 0.0 {
                                return f64::NAN;
                            }
                            let hit: f64 = cols.iter().map(|&c| p[c as usize]).sum();
                            ((hit - m * mean) / (ss * gold_ss).sqrt()).clamp(-1.0, 1.0)
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Rank every predicted row against the whole pool; row i is meant to
/// match pool row `targets[i]`.
pub fn evaluate_against_pool(
    predicted: &DMatrix<f64>,
    pool: Gold<'_>,
    targets: &[usize],
    k: usize,
    frequencies: Option<&[f64]>,
) -> Result<EvaluationReport, EvaluationError> {
    let n_pool = pool.nrows();
    if k == 0 {
        return Err(EvaluationError::KZero);
    }
    if k > n_pool {
        return Err(EvaluationError::KTooLarge { k, pool: n_pool });
    }
    if targets.len() != predicted.nrows() {
        return Err(EvaluationError::RowMismatch {
            predicted: predicted.nrows(),
            expected: targets.len(),
        });
    }
    if let Some(f) = frequencies {
        if f.len() != predicted.nrows() {
            return Err(EvaluationError::RowMismatch {
                predicted: predicted.nrows(),
                expected: f.len(),
            });
        }
    }
    if predicted.ncols() != pool.dims() {
        return Err(EvaluationError::Dimension {
            expected: pool.dims(),
            found: predicted.ncols(),
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= n_pool) {
        return Err(EvaluationError::MissingTarget {
            target: t,
            pool: n_pool,
        });
    }

    let groups = match pool {
        Gold::Semantic(s) => {
            group_rows((0..n_pool).map(|i| s.values().row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>()))
        }
        Gold::Form(f) => group_rows(f.rows().iter().map(|r| r.as_slice())),
    };
    let corr = group_correlations(predicted, pool, &groups);

    let mut undefined = 0;
    let per_word: Vec<WordResult> = targets
        .iter()
        .zip(&corr)
        .map(|(&t, row)| {
            // undefined correlations rank as 0
            let value = |g: usize| if row[g].is_nan() { 0.0 } else { row[g] };
            let tg = groups.group_of[t];
            let ct = value(tg);
            let mut above = 0;
            let mut tied_before = 0;
            let mut tied = 0;
            for (g, members) in groups.members.iter().enumerate() {
                let c = value(g);
                if c > ct {
                    above += members.len();
                } else if c == ct {
                    let before = members.partition_point(|&j| j < t);
                    tied_before += before;
                    tied += members.len() - usize::from(g == tg);
                }
            }
            let rank = 1 + above + tied_before;
            WordResult {
                key: pool.row_id(t).to_string(),
                target: t,
                target_correlation: ct,
                rank,
                correct_at_1: rank == 1,
                correct_at_k: rank <= k,
                tied,
            }
        })
        .collect();
    for (row, &t) in corr.iter().zip(targets) {
        if row[groups.group_of[t]].is_nan() {
            undefined += 1;
        }
    }

    let n = per_word.len();
    let frac = |f: &dyn Fn(&WordResult) -> bool| {
        if n == 0 {
            0.0
        } else {
            per_word.iter().filter(|r| f(r)).count() as f64 / n as f64
        }
    };
    let token_accuracy_at_1 = frequencies.map(|fr| {
        let total: f64 = fr.iter().sum();
        let hit: f64 = per_word
            .iter()
            .zip(fr)
            .filter(|(r, _)| r.correct_at_1)
            .map(|(_, f)| f)
            .sum();
        if total > 0.0 {
            hit / total
        } else {
            0.0
        }
    });
    let summary = EvaluationSummary {
        n,
        pool: n_pool,
        k,
        type_accuracy_at_1: frac(&|r| r.correct_at_1),
        type_accuracy_at_k: frac(&|r| r.correct_at_k),
        token_accuracy_at_1,
        tied_targets: per_word.iter().filter(|r| r.tied > 0).count(),
        undefined_correlations: undefined,
    };
    Ok(EvaluationReport { per_word, summary })
}

/// Evaluate predictions whose rows align one-to-one with the gold rows.
pub fn evaluate_nearest(
    predicted: &DMatrix<f64>,
    gold: Gold<'_>,
    k: usize,
    frequencies: Option<&[f64]>,
) -> Result<EvaluationReport, EvaluationError> {
    if predicted.nrows() != gold.nrows() {
        return Err(EvaluationError::RowMismatch {
            predicted: predicted.nrows(),
            expected: gold.nrows(),
        });
    }
    let targets: Vec<usize> = (0..gold.nrows()).collect();
    evaluate_against_pool(predicted, gold, &targets, k, frequencies)
}
