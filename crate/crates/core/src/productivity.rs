//! Productivity of inflectional classes and its relation to how well the
//! model handles each class.
//!
//! Measures are computed over lexemes: a class's types are its distinct
//! lexemes, its tokens the summed lemma frequencies and its hapaxes the
//! lexemes seen exactly once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::evaluation::EvaluationReport;
use crate::lexicon::{InflectionClass, LexiconEntry, Number};
use crate::production::ProductionReport;

/// Back-off added to V1 before taking logs.
pub const V1_BACKOFF: f64 = 1.0;
/// Back-off added to P and P* before taking logs.
pub const RATIO_BACKOFF: f64 = 0.01;
/// Classes with fewer test words than this are flagged as unstable.
pub const SMALL_CLASS_WORDS: usize = 5;

#[derive(Debug, Error)]
pub enum ProductivityError {
    #[error("no lemma frequency for lexeme `{0}`")]
    MissingLemma(String),
    #[error("lemma frequency of `{0}` must be at least 1")]
    ZeroLemma(String),
    #[error("lemma frequency file, line {line}: {message}")]
    LemmaFile { line: u64, message: String },
    #[error("report row `{0}` does not match any lexicon entry")]
    Unjoined(String),
    #[error("no report rows remain after joining with the lexicon")]
    EmptyJoin,
    #[error("need equal-length inputs with at least 3 values (got {0} and {1})")]
    Length(usize, usize),
    #[error("rank correlation is undefined for constant input")]
    Undefined,
    #[error("only {0} classes have both performance and productivity values; at least 3 are needed")]
    TooFewClasses(usize),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProductivity {
    pub class_id: u8,
    pub v: u64,
    pub v1: u64,
    pub n: u64,
    pub median_lemma_freq: f64,
    pub p: f64,
    pub pstar: f64,
    pub log_v: f64,
    pub log_v1: f64,
    pub log_median: f64,
    pub log_p: f64,
    pub log_pstar: f64,
}

/// Median with the midpoint convention for even counts.
pub fn median(values: &mut [u64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_unstable();
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m] as f64
    } else {
        (values[m - 1] as f64 + values[m] as f64) / 2.0
    }
}

/// One record per class with at least one lexeme, ordered by class.
/// Entries of unknown class are ignored.
pub fn class_measures(
    entries: &[LexiconEntry],
    lemma_freqs: &BTreeMap<String, u64>,
) -> Result<Vec<ClassProductivity>, ProductivityError> {
    let mut lexemes: BTreeMap<u8, BTreeSet<&str>> = BTreeMap::new();
    for e in entries {
        if let InflectionClass::Known(k) = e.class {
            lexemes.entry(k).or_default().insert(e.lexeme.as_str());
        }
    }
    let mut rows = Vec::new();
    for (&class_id, lex) in &lexemes {
        let mut freqs = Vec::with_capacity(lex.len());
        for &l in lex {
            let f = *lemma_freqs
                .get(l)
                .ok_or_else(|| ProductivityError::MissingLemma(l.to_string()))?;
            if f == 0 {
                return Err(ProductivityError::ZeroLemma(l.to_string()));
            }
            freqs.push(f);
        }
        let v = freqs.len() as u64;
        let v1 = freqs.iter().filter(|&&f| f == 1).count() as u64;
        let n: u64 = freqs.iter().sum();
        let med = median(&mut freqs);
        rows.push(ClassProductivity {
            class_id,
            v,
            v1,
            n,
            median_lemma_freq: med,
            p: v1 as f64 / n as f64,
            pstar: 0.0,
            log_v: (v as f64).ln(),
            log_v1: (v1 as f64 + V1_BACKOFF).ln(),
            log_median: med.ln(),
            log_p: 0.0,
            log_pstar: 0.0,
        });
    }
    let total_v1: u64 = rows.iter().map(|r| r.v1).sum();
    for r in &mut rows {
        if total_v1 > 0 {
            r.pstar = r.v1 as f64 / total_v1 as f64;
        }
        r.log_p = (r.p + RATIO_BACKOFF).ln();
        r.log_pstar = (r.pstar + RATIO_BACKOFF).ln();
    }
    Ok(rows)
}

/// Drop classes with fewer than `min_types` lexemes; P* is not renormalised.
pub fn exclude_small_classes(rows: Vec<ClassProductivity>, min_types: u64) -> Vec<ClassProductivity> {
    rows.into_iter().filter(|r| r.v >= min_types).collect()
}

/// Read a `lexeme,frequency` table.
pub fn read_lemma_frequencies<R: Read>(reader: R) -> Result<BTreeMap<String, u64>, ProductivityError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["lexeme", "frequency"] {
        return Err(ProductivityError::LemmaFile {
            line: 1,
            message: "expected header `lexeme,frequency`".into(),
        });
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| ProductivityError::LemmaFile { line, message };
        if rec.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", rec.len())));
        }
        let lexeme = rec[0].trim().to_string();
        let f: u64 = rec[1]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad frequency `{}`", &rec[1])))?;
        if f == 0 {
            return Err(err(format!("frequency of `{lexeme}` must be at least 1")));
        }
        if out.insert(lexeme.clone(), f).is_some() {
            return Err(err(format!("duplicate lexeme `{lexeme}`")));
        }
    }
    Ok(out)
}

/// Fallback lemma frequencies: the summed frequencies of each lexeme's forms.
pub fn lemma_frequencies_from_forms(entries: &[LexiconEntry]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for e in entries {
        *out.entry(e.lexeme.clone()).or_insert(0) += e.frequency;
    }
    out
}

/// Probability mass of unseen types estimated as the share of hapaxes
/// among all tokens.
pub fn good_turing_unseen(frequencies: &[u64]) -> f64 {
    let n: u64 = frequencies.iter().sum();
    if n == 0 {
        return 0.0;
    }
    frequencies.iter().filter(|&&f| f == 1).count() as f64 / n as f64
}

/// Per-word outcome joined onto the lexicon by entry key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub key: String,
    pub correlation: Option<f64>,
    pub correct: bool,
    pub support: Option<f64>,
}

impl From<&EvaluationReport> for Vec<PerformanceRow> {
    fn from(r: &EvaluationReport) -> Self {
        r.per_word
            .iter()
            .map(|w| PerformanceRow {
                key: w.key.clone(),
                correlation: Some(w.target_correlation),
                correct: w.correct_at_1,
                support: None,
            })
            .collect()
    }
}

impl From<&ProductionReport> for Vec<PerformanceRow> {
    fn from(r: &ProductionReport) -> Self {
        r.records
            .iter()
            .map(|w| PerformanceRow {
                key: w.key.clone(),
                correlation: None,
                correct: w.correct,
                support: w.support.filter(|s| !s.is_nan()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPerformance {
    pub class_id: u8,
    pub mean_target_correlation: Option<f64>,
    pub mean_accuracy: f64,
    pub mean_support: Option<f64>,
    pub n_words: usize,
    /// Fewer than [`SMALL_CLASS_WORDS`] words.
    pub small: bool,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Per-class means of the outcomes. Words of unknown class or ambiguous
/// number are left out.
pub fn class_performance(
    rows: &[PerformanceRow],
    entries: &[LexiconEntry],
) -> Result<Vec<ClassPerformance>, ProductivityError> {
    let by_key: HashMap<String, &LexiconEntry> = entries.iter().map(|e| (e.key().to_string(), e)).collect();
    #[derive(Default)]
    struct Acc {
        corr: Vec<f64>,
        correct: usize,
        support: Vec<f64>,
        n: usize,
    }
    let mut acc: BTreeMap<u8, Acc> = BTreeMap::new();
    for r in rows {
        let e = by_key
            .get(&r.key)
            .ok_or_else(|| ProductivityError::Unjoined(r.key.clone()))?;
        let InflectionClass::Known(k) = e.class else { continue };
        if e.number == Number::Ambiguous {
            continue;
        }
        let a = acc.entry(k).or_default();
        a.n += 1;
        a.correct += usize::from(r.correct);
        a.corr.extend(r.correlation);
        a.support.extend(r.support);
    }
    if acc.is_empty() {
        return Err(ProductivityError::EmptyJoin);
    }
    Ok(acc
        .into_iter()
        .map(|(class_id, a)| ClassPerformance {
            class_id,
            mean_target_correlation: mean(&a.corr),
            mean_accuracy: a.correct as f64 / a.n as f64,
            mean_support: mean(&a.support),
            n_words: a.n,
            small: a.n < SMALL_CLASS_WORDS,
        })
        .collect())
}

/// Mid-ranks (1-based); tied values share the mean of their positions.
pub fn mid_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spearman {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Spearman's rank correlation with a two-sided p-value from the
/// t approximation on n − 2 degrees of freedom.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Spearman, ProductivityError> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(ProductivityError::Length(x.len(), y.len()));
    }
    let rho = crate::linalg::pearson(&mid_ranks(x), &mid_ranks(y)).ok_or(ProductivityError::Undefined)?;
    let n = x.len();
    let df = (n - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    Ok(Spearman { rho, p_value, n })
}

/// Productivity measures correlated against performance.
pub const MEASURES: [&str; 5] = ["logP", "logV", "logV1", "logMedian", "logPstar"];

impl ClassProductivity {
    pub fn measure(&self, name: &str) -> Option<f64> {
        Some(match name {
            "logP" => self.log_p,
            "logV" => self.log_v,
            "logV1" => self.log_v1,
            "logMedian" => self.log_median,
            "logPstar" => self.log_pstar,
            _ => return None,
        })
    }
}

impl ClassPerformance {
    pub fn column(&self, name: &str) -> Option<f64> {
        match name {
            "accuracy" => Some(self.mean_accuracy),
            "correlation" => self.mean_target_correlation,
            "support" => self.mean_support,
            _ => None,
        }
    }
}

pub const PERFORMANCE_COLUMNS: [&str; 3] = ["accuracy", "correlation", "support"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub performance: String,
    pub measure: String,
    pub n: usize,
    /// `None` when the correlation is undefined.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub class_id: u8,
    pub performance: String,
    pub performance_value: f64,
    pub measure: String,
    pub measure_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub rows: Vec<CorrelationRow>,
    pub scatter: Vec<ScatterPoint>,
}

/// Spearman correlations of every available performance column with each
/// productivity measure, over the classes present in both inputs.
pub fn productivity_correlation_report(
    perf: &[ClassPerformance],
    prod: &[ClassProductivity],
) -> Result<CorrelationReport, ProductivityError> {
    let by_class: BTreeMap<u8, &ClassProductivity> = prod.iter().map(|p| (p.class_id, p)).collect();
    let joined: Vec<(&ClassPerformance, &ClassProductivity)> = perf
        .iter()
        .filter_map(|c| by_class.get(&c.class_id).map(|p| (c, *p)))
        .collect();
    if joined.len() < 3 {
        return Err(ProductivityError::TooFewClasses(joined.len()));
    }
    let mut rows = Vec::new();
    let mut scatter = Vec::new();
    for col in PERFORMANCE_COLUMNS {
        let pts: Vec<(&ClassPerformance, &ClassProductivity, f64)> = joined
            .iter()
            .filter_map(|(c, p)| c.column(col).map(|v| (*c, *p, v)))
            .collect();
        if pts.len() < 3 {
            continue;
        }
        let ys: Vec<f64> = pts.iter().map(|t| t.2).collect();
        for m in MEASURES {
            let xs: Vec<f64> = pts.iter().map(|t| t.1.measure(m).unwrap()).collect();
            let s = spearman(&ys, &xs).ok();
            rows.push(CorrelationRow {
                performance: col.to_string(),
                measure: m.to_string(),
                n: pts.len(),
                rho: s.map(|s| s.rho),
                p_value: s.map(|s| s.p_value),
            });
            for (c, p, v) in &pts {
                scatter.push(ScatterPoint {
                    class_id: c.class_id,
                    performance: col.to_string(),
                    performance_value: *v,
                    measure: m.to_string(),
                    measure_value: p.measure(m).unwrap(),
                });
            }
        }
    }
    Ok(CorrelationReport { rows, scatter })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

pub fn write_productivity_csv<W: Write>(w: W, rows: &[ClassProductivity]) -> Result<(), ProductivityError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "class",
        "V",
        "V1",
        "N",
        "median",
        "P",
        "Pstar",
        "logV",
        "logV1",
        "logMedian",
        "logP",
        "logPstar",
    ])?;
    for r in rows {
        wtr.write_record([
            r.class_id.to_string(),
            r.v.to_string(),
            r.v1.to_string(),
            r.n.to_string(),
            format!("{:.6}", r.median_lemma_freq),
            format!("{:.6}", r.p),
            format!("{:.6}", r.pstar),
            format!("{:.6}", r.log_v),
            format!("{:.6}", r.log_v1),
            format!("{:.6}", r.log_median),
            format!("{:.6}", r.log_p),
            format!("{:.6}", r.log_pstar),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_performance_csv<W: Write>(w: W, rows: &[ClassPerformance]) -> Result<(), ProductivityError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "class",
        "n_words",
        "mean_accuracy",
        "mean_correlation",
        "mean_support",
        "small",
    ])?;
    for r in rows {
        wtr.write_record([
            r.class_id.to_string(),
            r.n_words.to_string(),
            format!("{:.6}", r.mean_accuracy),
            opt(r.mean_target_correlation),
            opt(r.mean_support),
            u8::from(r.small).to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

impl CorrelationReport {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ProductivityError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["performance", "measure", "n", "rho", "p_value"])?;
        for r in &self.rows {
            wtr.write_record([
                r.performance.clone(),
                r.measure.clone(),
                r.n.to_string(),
                opt(r.rho),
                r.p_value.map(|p| format!("{p:.6e}")).unwrap_or_else(|| "NA".into()),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_scatter_csv<W: Write>(&self, w: W) -> Result<(), ProductivityError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["class", "performance", "performance_value", "measure", "measure_value"])?;
        for s in &self.scatter {
            wtr.write_record([
                s.class_id.to_string(),
                s.performance.clone(),
                format!("{:.6}", s.performance_value),
                s.measure.clone(),
                format!("{:.6}", s.measure_value),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
