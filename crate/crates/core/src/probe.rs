//! Linear discriminant probes: how much of a word's class, case or number
//! can be read off its embedding?

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{SemanticMatrix, ShiftVectorSet};
use crate::lexicon::{cell_label, InflectionClass, LexiconEntry, Number};

/// Default shrinkage towards the diagonal of the pooled covariance.
pub const DEFAULT_SHRINKAGE: f64 = 0.1;
/// Cells with fewer rows are reported as NA.
pub const MIN_CELL_TOKENS: usize = 30;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{rows} rows but {labels} labels")]
    RowMismatch { rows: usize, labels: usize },
    #[error("need at least two distinct labels, found {0}")]
    TooFewLabels(usize),
    #[error("label `{0}` has a single member; the covariance cannot be pooled")]
    SingleMember(String),
    #[error("pooled covariance is singular; use a shrinkage above {0}")]
    Singular(f64),
    #[error("shrinkage must lie in [0, 1], got {0}")]
    BadShrinkage(f64),
    #[error("expected a vector of length {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("no labels given")]
    Empty,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Gaussian classifier with one covariance shared by all labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Sorted.
    pub labels: Vec<String>,
    /// One row per label.
    pub means: DMatrix<f64>,
    /// Pooled within-label covariance after shrinkage.
    pub covariance: DMatrix<f64>,
    pub shrinkage: f64,
    pub priors: Vec<f64>,
    chol_l: DMatrix<f64>,
    /// L⁻¹μ for every label, one column each.
    white_means: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaPrediction {
    pub label: usize,
    /// Discriminant score per label: log prior − ½ Mahalanobis distance.
    pub scores: Vec<f64>,
    pub tie: bool,
}

/// Sufficient statistics of a labelled sample.
struct Stats {
    counts: Vec<usize>,
    sums: DMatrix<f64>,
    scatter: DMatrix<f64>,
}

fn label_index(labels: &[String]) -> (Vec<String>, Vec<usize>) {
    let set: BTreeSet<&String> = labels.iter().collect();
    let sorted: Vec<String> = set.into_iter().cloned().collect();
    let pos: BTreeMap<&String, usize> = sorted.iter().enumerate().map(|(i, l)| (l, i)).collect();
    let idx = labels.iter().map(|l| pos[l]).collect();
    (sorted, idx)
}

fn stats(x: &DMatrix<f64>, idx: &[usize], k: usize) -> Stats {
    let d = x.ncols();
    let mut counts = vec![0usize; k];
    let mut sums = DMatrix::zeros(k, d);
    for (i, &g) in idx.iter().enumerate() {
        counts[g] += 1;
        let mut row = sums.row_mut(g);
        row += x.row(i);
    }
    let mut centered = x.clone();
    for (i, &g) in idx.iter().enumerate() {
        let n = counts[g] as f64;
        for j in 0..d {
            centered[(i, j)] -= sums[(g, j)] / n;
        }
    }
    let scatter = centered.tr_mul(&centered);
    Stats { counts, sums, scatter }
}

impl LdaModel {
    fn from_stats(labels: Vec<String>, st: &Stats, shrinkage: f64) -> Result<Self, ProbeError> {
        let k = labels.len();
        let n: usize = st.counts.iter().sum();
        let d = st.scatter.nrows();
        let mut means = st.sums.clone();
        for g in 0..k {
            let c = st.counts[g] as f64;
            means.row_mut(g).iter_mut().for_each(|v| *v /= c);
        }
        let denom = (n - k) as f64;
        let mut cov = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let s = 0.5 * (st.scatter[(i, j)] + st.scatter[(j, i)]) / denom;
                cov[(i, j)] = if i == j { s } else { (1.0 - shrinkage) * s };
            }
        }
        let scale = (0..d).map(|i| cov[(i, i)]).fold(0.0, f64::max);
        let chol = Cholesky::new(cov.clone()).ok_or(ProbeError::Singular(shrinkage))?;
        let l = chol.l();
        let tol = scale * f64::EPSILON * d as f64;
        if scale <= 0.0 || (0..d).any(|i| l[(i, i)] * l[(i, i)] <= tol) {
            return Err(ProbeError::Singular(shrinkage));
        }
        let white_means = l
            .solve_lower_triangular(&means.transpose())
            .ok_or(ProbeError::Singular(shrinkage))?;
        Ok(LdaModel {
            labels,
            means,
            covariance: cov,
            shrinkage,
            priors: st.counts.iter().map(|&c| c as f64 / n as f64).collect(),
            chol_l: l,
            white_means,
        })
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }
}

fn check(x: &DMatrix<f64>, labels: &[String], shrinkage: f64) -> Result<(), ProbeError> {
    if x.nrows() != labels.len() {
        return Err(ProbeError::RowMismatch {
            rows: x.nrows(),
            labels: labels.len(),
        });
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(ProbeError::BadShrinkage(shrinkage));
    }
    Ok(())
}

fn check_counts(labels: &[String], counts: &[usize]) -> Result<(), ProbeError> {
    if labels.len() < 2 {
        return Err(ProbeError::TooFewLabels(labels.len()));
    }
    if let Some(g) = counts.iter().position(|&c| c < 2) {
        return Err(ProbeError::SingleMember(labels[g].clone()));
    }
    Ok(())
}

/// Fit on the rows of `x`. The covariance is shrunk as
/// (1−λ)Σ̂ + λ·diag(Σ̂).
pub fn lda_fit(x: &DMatrix<f64>, labels: &[String], shrinkage: f64) -> Result<LdaModel, ProbeError> {
    check(x, labels, shrinkage)?;
    let (names, idx) = label_index(labels);
    let st = stats(x, &idx, names.len());
    check_counts(&names, &st.counts)?;
    LdaModel::from_stats(names, &st, shrinkage)
}

/// Most probable label; exact score ties go to the first label in order.
pub fn lda_predict(model: &LdaModel, x: &[f64]) -> Result<LdaPrediction, ProbeError> {
    if x.len() != model.dims() {
        return Err(ProbeError::Dimension {
            expected: model.dims(),
            found: x.len(),
        });
    }
    let z = model
        .chol_l
        .solve_lower_triangular(&DVector::from_column_slice(x))
        .expect("factor has a non-zero diagonal");
    let scores: Vec<f64> = (0..model.labels.len())
        .map(|g| {
            let dist: f64 = z
                .iter()
                .zip(model.white_means.column(g).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            model.priors[g].ln() - 0.5 * dist
        })
        .collect();
    let mut best = 0;
    for g in 1..scores.len() {
        if scores[g] > scores[best] {
            best = g;
        }
    }
    let tie = scores.iter().enumerate().any(|(g, &s)| g != best && s == scores[best]);
    Ok(LdaPrediction {
        label: best,
        scores,
        tie,
    })
}

/// Fraction of rows whose label the model reproduces.
pub fn resubstitution_accuracy(model: &LdaModel, x: &DMatrix<f64>, labels: &[String]) -> Result<f64, ProbeError> {
    if labels.is_empty() {
        return Err(ProbeError::Empty);
    }
    let hits = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            lda_predict(model, &row).map(|p| model.labels[p.label] == labels[i])
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvResult {
    /// Correct / evaluated.
    pub accuracy: f64,
    pub correct: usize,
    pub evaluated: usize,
    /// Folds that would leave a label with a single member.
    pub skipped: usize,
    /// Per held-out row; `None` for skipped folds.
    pub folds: Vec<Option<LdaPrediction>>,
}

/// Leave-one-out cross-validation. Each fold's statistics are obtained by
/// removing the held-out row from the full-sample sums and scatter, then
/// the fold model is factorized afresh.
pub fn loocv(x: &DMatrix<f64>, labels: &[String], shrinkage: f64) -> Result<LoocvResult, ProbeError> {
    check(x, labels, shrinkage)?;
    let (names, idx) = label_index(labels);
    let k = names.len();
    let full = stats(x, &idx, k);
    check_counts(&names, &full.counts)?;
    let folds = (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let g = idx[i];
            let c = full.counts[g];
            if c <= 2 {
                return Ok(None);
            }
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            let d = row.len();
            let mean: Vec<f64> = (0..d).map(|j| full.sums[(g, j)] / c as f64).collect();
            let dev: Vec<f64> = row.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let w = c as f64 / (c - 1) as f64;
            let mut scatter = full.scatter.clone();
            for a in 0..d {
                for b in 0..d {
                    scatter[(a, b)] -= w * dev[a] * dev[b];
                }
            }
            let mut counts = full.counts.clone();
            counts[g] -= 1;
            let mut sums = full.sums.clone();
            for j in 0..d {
                sums[(g, j)] -= row[j];
            }
            let st = Stats { counts, sums, scatter };
            let model = LdaModel::from_stats(names.clone(), &st, shrinkage)?;
            let p = lda_predict(&model, &row)?;
            Ok(Some(p))
        })
        .collect::<Result<Vec<_>, ProbeError>>()?;
    let mut correct = 0;
    let mut evaluated = 0;
    for (f, &g) in folds.iter().zip(&idx) {
        if let Some(p) = f {
            evaluated += 1;
            correct += usize::from(p.label == g);
        }
    }
    Ok(LoocvResult {
        accuracy: if evaluated == 0 {
            0.0
        } else {
            correct as f64 / evaluated as f64
        },
        correct,
        evaluated,
        skipped: folds.len() - evaluated,
        folds,
    })
}

/// Share of the most frequent label.
pub fn majority_baseline(labels: &[String]) -> Result<f64, ProbeError> {
    if labels.is_empty() {
        return Err(ProbeError::Empty);
    }
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    Ok(*counts.values().max().unwrap() as f64 / labels.len() as f64)
}

/// What a probe tries to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeTarget {
    Class,
    Case,
    Number,
    CaseNumber,
}

impl ProbeTarget {
    /// `None` when the entry has no usable label for this target.
    pub fn label(self, e: &LexiconEntry) -> Option<String> {
        match self {
            ProbeTarget::Class => match e.class {
                InflectionClass::Known(k) => Some(k.to_string()),
                InflectionClass::Unknown => None,
            },
            ProbeTarget::Case => (e.case != crate::lexicon::Case::Uncertain).then(|| e.case.to_string()),
            ProbeTarget::Number => (e.number != Number::Ambiguous).then(|| e.number.to_string()),
            ProbeTarget::CaseNumber => {
                (e.case != crate::lexicon::Case::Uncertain && e.number != Number::Ambiguous).then(|| e.cell_label())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub n: usize,
    pub n_labels: usize,
    pub accuracy: f64,
    pub loocv: Option<f64>,
    pub skipped_folds: usize,
    pub baseline: f64,
    /// Rows dropped because their label has fewer than two members.
    pub dropped_rows: usize,
}

/// Drop rows whose label occurs fewer than twice.
fn keep_pooled(labels: &[String]) -> Vec<usize> {
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    (0..labels.len()).filter(|&i| counts[&labels[i]] >= 2).collect()
}

/// Resubstitution accuracy, optional LOOCV and the majority baseline.
pub fn probe(
    x: &DMatrix<f64>,
    labels: &[String],
    shrinkage: f64,
    with_loocv: bool,
) -> Result<ProbeSummary, ProbeError> {
    check(x, labels, shrinkage)?;
    let keep = keep_pooled(labels);
    let xs = x.select_rows(&keep);
    let ls: Vec<String> = keep.iter().map(|&i| labels[i].clone()).collect();
    let model = lda_fit(&xs, &ls, shrinkage)?;
    let accuracy = resubstitution_accuracy(&model, &xs, &ls)?;
    let cv = if with_loocv {
        Some(loocv(&xs, &ls, shrinkage)?)
    } else {
        None
    };
    Ok(ProbeSummary {
        n: ls.len(),
        n_labels: model.labels.len(),
        accuracy,
        loocv: cv.as_ref().map(|c| c.accuracy),
        skipped_folds: cv.as_ref().map_or(0, |c| c.skipped),
        baseline: majority_baseline(&ls)?,
        dropped_rows: labels.len() - keep.len(),
    })
}

/// Probe the embeddings of every labelled entry. `semantics` is row-aligned
/// with `entries`.
pub fn probe_embeddings(
    entries: &[LexiconEntry],
    semantics: &SemanticMatrix,
    target: ProbeTarget,
    shrinkage: f64,
    with_loocv: bool,
) -> Result<ProbeSummary, ProbeError> {
    let (rows, labels): (Vec<usize>, Vec<String>) = entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| target.label(e).map(|l| (i, l)))
        .unzip();
    probe(&semantics.values().select_rows(&rows), &labels, shrinkage, with_loocv)
}

/// Probe plural shift vectors for the class or case of their pair.
pub fn probe_shift_vectors(
    shifts: &ShiftVectorSet,
    target: ProbeTarget,
    shrinkage: f64,
    with_loocv: bool,
) -> Result<ProbeSummary, ProbeError> {
    let labelled: Vec<(usize, String)> = (0..shifts.len())
        .filter_map(|i| {
            let l = match target {
                ProbeTarget::Class => shifts.classes[i].id().map(|k| k.to_string()),
                ProbeTarget::Case => Some(shifts.cases[i].to_string()),
                _ => None,
            };
            l.map(|l| (i, l))
        })
        .collect();
    let rows: Vec<usize> = labelled.iter().map(|t| t.0).collect();
    let labels: Vec<String> = labelled.into_iter().map(|t| t.1).collect();
    probe(&shifts.shifts.select_rows(&rows), &labels, shrinkage, with_loocv)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProbe {
    pub cell: String,
    pub n_class: usize,
    pub n_lexeme: usize,
    pub n_token: usize,
    /// `None` marks an NA row.
    pub lda: Option<f64>,
    pub lda_cv: Option<f64>,
    pub baseline: Option<f64>,
    pub skipped_folds: usize,
    pub note: Option<String>,
}

/// One inflectional-class probe per paradigm cell. Cells with fewer than
/// `min_tokens` rows, or that cannot be fitted, are reported as NA.
pub fn probe_by_cell(
    entries: &[LexiconEntry],
    semantics: &SemanticMatrix,
    shrinkage: f64,
    min_tokens: usize,
) -> Result<Vec<CellProbe>, ProbeError> {
    if entries.len() != semantics.nrows() {
        return Err(ProbeError::RowMismatch {
            rows: semantics.nrows(),
            labels: entries.len(),
        });
    }
    let mut cells: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.case == crate::lexicon::Case::Uncertain || e.number == Number::Ambiguous {
            continue;
        }
        if e.class == InflectionClass::Unknown {
            continue;
        }
        cells.entry(cell_label(e.case, e.number)).or_default().push(i);
    }
    let mut out = Vec::new();
    for (cell, rows) in cells {
        let labels: Vec<String> = rows
            .iter()
            .map(|&i| ProbeTarget::Class.label(&entries[i]).unwrap())
            .collect();
        let n_class = labels.iter().collect::<BTreeSet<_>>().len();
        let n_lexeme = rows
            .iter()
            .map(|&i| entries[i].lexeme.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let mut row = CellProbe {
            cell,
            n_class,
            n_lexeme,
            n_token: rows.len(),
            lda: None,
            lda_cv: None,
            baseline: None,
            skipped_folds: 0,
            note: None,
        };
        if rows.len() < min_tokens {
            row.note = Some(format!("fewer than {min_tokens} tokens"));
        } else {
            match probe(&semantics.values().select_rows(&rows), &labels, shrinkage, true) {
                Ok(s) => {
                    row.lda = Some(s.accuracy);
                    row.lda_cv = s.loocv;
                    row.baseline = Some(s.baseline);
                    row.skipped_folds = s.skipped_folds;
                }
                Err(e) => row.note = Some(e.to_string()),
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", 100.0 * x)).unwrap_or_else(|| "NA".into())
}

/// Columns: cell, n_class, n_lexeme, n_token, lda_pct, lda_cv_pct, baseline_pct.
pub fn write_cell_table<W: Write>(w: W, rows: &[CellProbe]) -> Result<(), ProbeError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cell",
        "n_class",
        "n_lexeme",
        "n_token",
        "lda_pct",
        "lda_cv_pct",
        "baseline_pct",
    ])?;
    for r in rows {
        wtr.write_record([
            r.cell.clone(),
            r.n_class.to_string(),
            r.n_lexeme.to_string(),
            r.n_token.to_string(),
            pct(r.lda),
            pct(r.lda_cv),
            pct(r.baseline),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
