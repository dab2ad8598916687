//! Pretrained word embeddings and the semantic matrix.
//!
//! The input is the plain-text vector format distributed with common
//! subword embeddings: a `count dim` header line followed by one token and
//! `dim` reals per line.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{normalize_surface, Case, InflectionClass, LexiconEntry, Number};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot open embeddings {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("embedding header must be `count dim`, found `{0}`")]
    Header(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    DimensionMismatch { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse `{value}` as a real")]
    BadValue { line: usize, value: String },
    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },
    #[error("none of the {0} vocabulary items has an embedding")]
    NoCoverage(usize),
    #[error("{rows} semantic rows do not align with {entries} lexicon entries")]
    Misaligned { rows: usize, entries: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dense words × dimensions meaning matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMatrix {
    values: DMatrix<f64>,
    row_ids: Vec<String>,
}

impl SemanticMatrix {
    pub fn new(values: DMatrix<f64>, row_ids: Vec<String>) -> Self {
        assert_eq!(values.nrows(), row_ids.len(), "one id per row");
        SemanticMatrix { values, row_ids }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn set_row_ids(&mut self, ids: Vec<String>) {
        assert_eq!(ids.len(), self.values.nrows());
        self.row_ids = ids;
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dims(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> SemanticMatrix {
        SemanticMatrix {
            values: self.values.select_rows(idx),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCoverage {
    pub vocabulary: usize,
    pub hits: usize,
    pub misses: usize,
    /// Vocabulary items whose stored vector is all zeros; counted as misses.
    pub zero_vectors: usize,
    pub missing: Vec<String>,
}

impl EmbeddingCoverage {
    pub fn ratio(&self) -> f64 {
        if self.vocabulary == 0 {
            0.0
        } else {
            self.hits as f64 / self.vocabulary as f64
        }
    }
}

/// Token → vector table restricted to a vocabulary of interest.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Parse a vector file, keeping only tokens in `wanted` (all if `None`).
    /// The first occurrence of a repeated token wins.
    pub fn read<R: BufRead>(reader: R, wanted: Option<&HashSet<String>>) -> Result<Self, EmbeddingError> {
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let parts: Vec<&str> = header.split_whitespace().collect();
        let dim = match parts.as_slice() {
            [count, dim] if count.parse::<usize>().is_ok() => dim
                .parse::<usize>()
                .map_err(|_| EmbeddingError::Header(header.clone()))?,
            _ => return Err(EmbeddingError::Header(header.clone())),
        };
        if dim == 0 {
            return Err(EmbeddingError::Header(header));
        }

        let mut vectors = HashMap::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let lineno = i + 2;
            let mut it = line.split_whitespace();
            let Some(token) = it.next() else { continue };
            let values: Vec<&str> = it.collect();
            if values.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: lineno,
                    expected: dim,
                    found: values.len(),
                });
            }
            let token = normalize_surface(token);
            if wanted.is_some_and(|w| !w.contains(&token)) || vectors.contains_key(&token) {
                continue;
            }
            let mut v = Vec::with_capacity(dim);
            for s in values {
                // single precision, as the vectors were trained; differences of
                // two such values are exact in f64
                let x = f64::from(s.parse::<f32>().map_err(|_| EmbeddingError::BadValue {
                    line: lineno,
                    value: s.to_string(),
                })?);
                if !x.is_finite() {
                    return Err(EmbeddingError::NonFinite { line: lineno });
                }
                v.push(x);
            }
            vectors.insert(token, v);
        }
        Ok(EmbeddingTable { dim, vectors })
    }

    pub fn load(path: impl AsRef<Path>, wanted: Option<&HashSet<String>>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| EmbeddingError::Open {
            path: path.display().to_string(),
            source,
        })?;
        Self::read(std::io::BufReader::new(file), wanted)
    }

    /// Rows for the vocabulary items that have a usable (non-zero) vector,
    /// in vocabulary order; repeats in the vocabulary repeat the row.
    pub fn semantic_matrix<S: AsRef<str>>(&self, vocabulary: &[S]) -> (SemanticMatrix, EmbeddingCoverage) {
        let mut coverage = EmbeddingCoverage {
            vocabulary: vocabulary.len(),
            ..Default::default()
        };
        let mut data = Vec::new();
        let mut ids = Vec::new();
        for word in vocabulary {
            let word = word.as_ref();
            match self.vectors.get(word) {
                Some(v) if v.iter().any(|&x| x != 0.0) => {
                    data.extend_from_slice(v);
                    ids.push(word.to_string());
                    coverage.hits += 1;
                }
                Some(_) => {
                    coverage.zero_vectors += 1;
                    coverage.misses += 1;
                    coverage.missing.push(word.to_string());
                }
                None => {
                    coverage.misses += 1;
                    coverage.missing.push(word.to_string());
                }
            }
        }
        let values = DMatrix::from_row_slice(ids.len(), self.dim, &data);
        (SemanticMatrix::new(values, ids), coverage)
    }

    /// Write the table in vector-file format, tokens in the given order.
    pub fn write<W: Write, S: AsRef<str>>(&self, mut w: W, order: &[S]) -> std::io::Result<()> {
        let present: Vec<&str> = order
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| self.vectors.contains_key(*t))
            .collect();
        writeln!(w, "{} {}", present.len(), self.dim)?;
        for t in present {
            write!(w, "{t}")?;
            for &x in &self.vectors[t] {
                write!(w, " {}", x as f32)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Load embeddings for `vocabulary`. Fails when nothing is covered.
pub fn load_embeddings<S: AsRef<str>>(
    path: impl AsRef<Path>,
    vocabulary: &[S],
) -> Result<(SemanticMatrix, EmbeddingCoverage), EmbeddingError> {
    let wanted: HashSet<String> = vocabulary.iter().map(|s| s.as_ref().to_string()).collect();
    let table = EmbeddingTable::load(path, Some(&wanted))?;
    let (s, cov) = table.semantic_matrix(vocabulary);
    if cov.hits == 0 {
        return Err(EmbeddingError::NoCoverage(vocabulary.len()));
    }
    Ok((s, cov))
}

/// Plural-minus-singular differences for forms sharing lexeme and case.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftVectorSet {
    /// (singular row, plural row) indices into the lexicon.
    pub pairs: Vec<(usize, usize)>,
    pub shifts: DMatrix<f64>,
    pub cases: Vec<Case>,
    pub classes: Vec<InflectionClass>,
}

impl ShiftVectorSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Pair every singular with the plural of the same lexeme and case.
/// `semantics` must be row-aligned with `entries`. Forms with an uncertain
/// case or ambiguous number are never paired.
pub fn compute_shift_vectors(
    entries: &[LexiconEntry],
    semantics: &SemanticMatrix,
) -> Result<ShiftVectorSet, EmbeddingError> {
    if entries.len() != semantics.nrows() {
        return Err(EmbeddingError::Misaligned {
            rows: semantics.nrows(),
            entries: entries.len(),
        });
    }
    let mut plural_of: HashMap<(&str, Case), usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        if e.number == Number::Plural && e.case != Case::Uncertain {
            plural_of.entry((e.lexeme.as_str(), e.case)).or_insert(i);
        }
    }
    let mut pairs = Vec::new();
    for (i, e) in entries.iter().enumerate() {
        if e.number != Number::Singular || e.case == Case::Uncertain {
            continue;
        }
        if let Some(&j) = plural_of.get(&(e.lexeme.as_str(), e.case)) {
            pairs.push((i, j));
        }
    }
    let dims = semantics.dims();
    let values = semantics.values();
    let shifts = DMatrix::from_fn(pairs.len(), dims, |p, d| {
        let (sg, pl) = pairs[p];
        values[(pl, d)] - values[(sg, d)]
    });
    Ok(ShiftVectorSet {
        cases: pairs.iter().map(|&(sg, _)| entries[sg].case).collect(),
        classes: pairs.iter().map(|&(sg, _)| entries[sg].class).collect(),
        pairs,
        shifts,
    })
}
