//! Letter n-gram cues and the binary form matrix.
//!
//! Words are padded with one boundary symbol on each side before the
//! n-grams are read off, so `mato` yields `#ma mat ato to#` for n = 3.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const BOUNDARY: char = '#';

#[derive(Debug, Error)]
pub enum CueError {
    #[error("n-gram size must be 3 or 4, got {0}")]
    GramSize(usize),
    #[error("empty surface form")]
    EmptySurface,
    #[error("surface `{0}` contains the reserved boundary symbol")]
    ReservedSymbol(String),
    #[error("cannot build an inventory from an empty word list")]
    EmptyWordList,
    #[error("word `{word}` has cue `{cue}` that is not in the inventory")]
    UnknownCue { word: String, cue: String },
    #[error("inventory line {line}: {message}")]
    BadInventory { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_gram_size(n: usize) -> Result<(), CueError> {
    if n == 3 || n == 4 {
        Ok(())
    } else {
        Err(CueError::GramSize(n))
    }
}

/// The n-grams of `#surface#` from left to right, repeats included.
pub fn extract_ngrams(surface: &str, n: usize) -> Result<Vec<String>, CueError> {
    check_gram_size(n)?;
    if surface.is_empty() {
        return Err(CueError::EmptySurface);
    }
    if surface.contains(BOUNDARY) {
        return Err(CueError::ReservedSymbol(surface.to_string()));
    }
    let padded: Vec<char> = std::iter::once(BOUNDARY)
        .chain(surface.chars())
        .chain(std::iter::once(BOUNDARY))
        .collect();
    Ok(padded.windows(n).map(|w| w.iter().collect()).collect())
}

/// Ordered universe of cues with stable column positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueInventory {
    n: usize,
    cues: Vec<String>,
    index: HashMap<String, usize>,
}

impl CueInventory {
    /// Union of the n-grams of `surfaces` in first-seen order.
    pub fn build<S: AsRef<str>>(surfaces: &[S], n: usize) -> Result<Self, CueError> {
        check_gram_size(n)?;
        if surfaces.is_empty() {
            return Err(CueError::EmptyWordList);
        }
        let mut inv = CueInventory {
            n,
            cues: Vec::new(),
            index: HashMap::new(),
        };
        for s in surfaces {
            for cue in extract_ngrams(s.as_ref(), n)? {
                if !inv.index.contains_key(&cue) {
                    inv.index.insert(cue.clone(), inv.cues.len());
                    inv.cues.push(cue);
                }
            }
        }
        Ok(inv)
    }

    pub fn from_cues(n: usize, cues: Vec<String>) -> Result<Self, CueError> {
        check_gram_size(n)?;
        let mut index = HashMap::with_capacity(cues.len());
        for (i, cue) in cues.iter().enumerate() {
            if cue.chars().count() != n {
                return Err(CueError::BadInventory {
                    line: i + 1,
                    message: format!("cue `{cue}` does not have {n} characters"),
                });
            }
            if index.insert(cue.clone(), i).is_some() {
                return Err(CueError::BadInventory {
                    line: i + 1,
                    message: format!("duplicate cue `{cue}`"),
                });
            }
        }
        Ok(CueInventory { n, cues, index })
    }

    pub fn gram_size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.cues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cues.is_empty()
    }

    pub fn cues(&self) -> &[String] {
        &self.cues
    }

    pub fn cue(&self, column: usize) -> &str {
        &self.cues[column]
    }

    pub fn column(&self, cue: &str) -> Option<usize> {
        self.index.get(cue).copied()
    }

    /// Sorted, deduplicated column indices of the cues of `surface`, plus
    /// the cues missing from the inventory.
    pub fn encode(&self, surface: &str) -> Result<(Vec<u32>, Vec<String>), CueError> {
        let mut cols = Vec::new();
        let mut missing = Vec::new();
        for cue in extract_ngrams(surface, self.n)? {
            match self.index.get(&cue) {
                Some(&c) => cols.push(c as u32),
                None => {
                    if !missing.contains(&cue) {
                        missing.push(cue)
                    }
                }
            }
        }
        cols.sort_unstable();
        cols.dedup();
        Ok((cols, missing))
    }

    /// SHA-256 over the cue list, used to tie saved mappings to an inventory.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.n.to_le_bytes());
        for c in &self.cues {
            h.update(c.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One cue per line; the line number is the column index.
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), CueError> {
        for c in &self.cues {
            writeln!(w, "{c}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R, n: usize) -> Result<Self, CueError> {
        let cues = r.lines().collect::<Result<Vec<_>, _>>()?;
        Self::from_cues(n, cues)
    }
}

/// What to do with cues of a word that the inventory does not know.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OovPolicy {
    Strict,
    Skip,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CueCoverage {
    pub words: usize,
    pub words_with_unknown_cues: usize,
    pub known_cues: usize,
    pub skipped_cues: usize,
    /// (word, cue) pairs dropped under [`OovPolicy::Skip`].
    pub skipped: Vec<(String, String)>,
}

impl CueCoverage {
    pub fn ratio(&self) -> f64 {
        let total = self.known_cues + self.skipped_cues;
        if total == 0 {
            1.0
        } else {
            self.known_cues as f64 / total as f64
        }
    }
}

/// Sparse binary words × cues matrix. Each row holds sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FormMatrix {
    ncols: usize,
    rows: Vec<Vec<u32>>,
    row_ids: Vec<String>,
}

impl FormMatrix {
    pub fn new(ncols: usize, rows: Vec<Vec<u32>>, row_ids: Vec<String>) -> Self {
        assert_eq!(rows.len(), row_ids.len(), "one id per row");
        debug_assert!(rows.iter().flatten().all(|&c| (c as usize) < ncols));
        FormMatrix { ncols, rows, row_ids }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn set_row_ids(&mut self, ids: Vec<String>) {
        assert_eq!(ids.len(), self.rows.len());
        self.row_ids = ids;
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.rows[i].binary_search(&(j as u32)).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.ncols];
        for &c in &self.rows[i] {
            v[c as usize] = 1.0;
        }
        v
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows(), self.ncols);
        for (i, row) in self.rows.iter().enumerate() {
            for &c in row {
                m[(i, c as usize)] = 1.0;
            }
        }
        m
    }

    pub fn select_rows(&self, idx: &[usize]) -> FormMatrix {
        FormMatrix {
            ncols: self.ncols,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
        }
    }

    /// Groups (of size ≥ 2) of rows with identical cue sets.
    pub fn collisions(&self) -> Vec<Vec<usize>> {
        let mut groups: BTreeMap<&[u32], Vec<usize>> = BTreeMap::new();
        for (i, row) in self.rows.iter().enumerate() {
            groups.entry(row.as_slice()).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().filter(|g| g.len() > 1).collect();
        out.sort();
        out
    }

    /// Triplet text format: a `rows cols nnz` header, then `row col 1` lines.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows(), self.ncols, self.nnz())?;
        for (i, row) in self.rows.iter().enumerate() {
            for c in row {
                writeln!(w, "{i} {c} 1")?;
            }
        }
        Ok(())
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for id in &self.row_ids {
            writeln!(w, "{id}")?;
        }
        Ok(())
    }
}

/// Entry (i, j) is 1 iff cue j occurs in surface i. Row ids are the surfaces.
pub fn build_form_matrix<S: AsRef<str> + Sync>(
    surfaces: &[S],
    inventory: &CueInventory,
    policy: OovPolicy,
) -> Result<(FormMatrix, CueCoverage), CueError> {
    let encoded: Vec<(Vec<u32>, Vec<String>)> = surfaces
        .par_iter()
        .map(|s| inventory.encode(s.as_ref()))
        .collect::<Result<_, _>>()?;

    let mut coverage = CueCoverage {
        words: surfaces.len(),
        ..Default::default()
    };
    let mut rows = Vec::with_capacity(surfaces.len());
    for (s, (cols, missing)) in surfaces.iter().zip(encoded) {
        if !missing.is_empty() {
            if policy == OovPolicy::Strict {
                return Err(CueError::UnknownCue {
                    word: s.as_ref().to_string(),
                    cue: missing[0].clone(),
                });
            }
            coverage.words_with_unknown_cues += 1;
            coverage.skipped_cues += missing.len();
            coverage
                .skipped
                .extend(missing.into_iter().map(|c| (s.as_ref().to_string(), c)));
        }
        coverage.known_cues += cols.len();
        rows.push(cols);
    }
    let ids = surfaces.iter().map(|s| s.as_ref().to_string()).collect();
    Ok((FormMatrix::new(inventory.len(), rows, ids), coverage))
}

/// Distinct cue strings of a surface.
pub fn cue_set(surface: &str, n: usize) -> Result<HashSet<String>, CueError> {
    Ok(extract_ngrams(surface, n)?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn trigrams_and_fourgrams() {
        assert_eq!(extract_ngrams("mato", 3).unwrap(), strs(&["#ma", "mat", "ato", "to#"]));
        assert_eq!(extract_ngrams("mato", 4).unwrap(), strs(&["#mat", "mato", "ato#"]));
        assert_eq!(extract_ngrams("aa", 4).unwrap(), strs(&["#aa#"]));
        assert!(extract_ngrams("a", 4).unwrap().is_empty());
    }

    #[test]
    fn reserved_symbol_and_bad_sizes() {
        assert!(matches!(extract_ngrams("a#b", 3), Err(CueError::ReservedSymbol(_))));
        assert!(matches!(extract_ngrams("abc", 5), Err(CueError::GramSize(5))));
        assert!(matches!(extract_ngrams("", 3), Err(CueError::EmptySurface)));
    }

    #[test]
    fn umlauts_are_single_characters() {
        let grams = extract_ngrams("pöytä", 3).unwrap();
        assert_eq!(grams, strs(&["#pö", "pöy", "öyt", "ytä", "tä#"]));
    }

    #[test]
    fn inventory_dedups() {
        let inv = CueInventory::build(&["aa", "aa"], 3).unwrap();
        assert_eq!(inv.cues(), &strs(&["#aa", "aa#"])[..]);
        assert!(matches!(
            CueInventory::build::<&str>(&[], 3),
            Err(CueError::EmptyWordList)
        ));
    }

    #[test]
    fn single_word_matrix_is_all_ones() {
        let inv = CueInventory::build(&["mato"], 3).unwrap();
        let (m, _) = build_form_matrix(&["mato"], &inv, OovPolicy::Strict).unwrap();
        assert_eq!(m.nrows(), 1);
        assert_eq!(m.ncols(), 4);
        assert_eq!(m.dense_row(0), vec![1.0; 4]);
    }

    #[test]
    fn absent_cue_is_zero() {
        let inv = CueInventory::build(&["mato", "matto"], 3).unwrap();
        let (m, _) = build_form_matrix(&["mato", "matto"], &inv, OovPolicy::Strict).unwrap();
        let att = inv.column("att").unwrap();
        assert_eq!(m.get(0, att), 0.0);
        assert_eq!(m.get(1, att), 1.0);
    }

    #[test]
    fn skip_policy_matches_set_difference() {
        let inv = CueInventory::build(&["mato", "matto"], 3).unwrap();
        assert!(matches!(
            build_form_matrix(&["masto"], &inv, OovPolicy::Strict),
            Err(CueError::UnknownCue { .. })
        ));
        let (m, cov) = build_form_matrix(&["masto"], &inv, OovPolicy::Skip).unwrap();

        // brute force: cues of "masto" minus the inventory's cue set
        let known: HashSet<String> = inv.cues().iter().cloned().collect();
        let word = cue_set("masto", 3).unwrap();
        let mut expected_missing: Vec<String> = word.difference(&known).cloned().collect();
        expected_missing.sort();
        let mut expected_present: Vec<String> = word.intersection(&known).cloned().collect();
        expected_present.sort();

        let mut skipped: Vec<String> = cov.skipped.iter().map(|(_, c)| c.clone()).collect();
        skipped.sort();
        assert_eq!(skipped, expected_missing);
        assert_eq!(skipped, strs(&["ast", "mas", "sto"]));
        let mut present: Vec<String> = m.row(0).iter().map(|&c| inv.cue(c as usize).to_string()).collect();
        present.sort();
        assert_eq!(present, expected_present);
        assert_eq!(cov.words_with_unknown_cues, 1);
        assert_eq!(cov.skipped_cues, 3);
    }

    #[test]
    fn duplicate_ngrams_stay_binary() {
        let inv = CueInventory::build(&["aaaa"], 3).unwrap();
        let (m, _) = build_form_matrix(&["aaaa"], &inv, OovPolicy::Strict).unwrap();
        assert_eq!(m.row(0).len(), 3); // #aa, aaa, aa#
        assert!(m.dense_row(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn collisions_reported() {
        let inv = CueInventory::build(&["abab", "ababab", "cd"], 3).unwrap();
        // "abab" and "ababab" share the cue set {#ab, aba, bab, ab#}
        let (m, _) = build_form_matrix(&["abab", "ababab", "cd"], &inv, OovPolicy::Strict).unwrap();
        assert_eq!(m.collisions(), vec![vec![0, 1]]);
    }

    #[test]
    fn inventory_round_trip() {
        let inv = CueInventory::build(&["mato", "pöytä"], 3).unwrap();
        let mut buf = Vec::new();
        inv.write(&mut buf).unwrap();
        let back = CueInventory::read(&buf[..], 3).unwrap();
        assert_eq!(back, inv);
        assert_eq!(back.fingerprint(), inv.fingerprint());
    }

    #[test]
    fn triplets() {
        let inv = CueInventory::build(&["aa"], 3).unwrap();
        let (m, _) = build_form_matrix(&["aa"], &inv, OovPolicy::Strict).unwrap();
        let mut buf = Vec::new();
        m.write_triplets(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1 2 2\n0 0 1\n0 1 1\n");
    }
}
