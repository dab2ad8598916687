//! Inflected-noun lexicon: loading, validation and train/test splits.
//!
//! A lexicon file is a comma-delimited UTF-8 table with the header
//! `surface,lexeme,case,number,class,frequency`. Every row is one attested
//! inflected form. Case, number and class labels that cannot be parsed are
//! kept with the [`Case::Uncertain`], [`Number::Ambiguous`] and
//! [`InflectionClass::Unknown`] markers so later filters can act on them.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::cues::BOUNDARY;

/// Column names of the lexicon file, in order.
pub const LEXICON_HEADER: [&str; 6] = ["surface", "lexeme", "case", "number", "class", "frequency"];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot open lexicon {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("lexicon header must be `{}`, found `{found}`", LEXICON_HEADER.join(","))]
    Header { found: String },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: duplicate entry {key}")]
    Duplicate { line: u64, key: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot hold out {requested} of {total} entries: only {achieved} satisfy the {binding} constraint")]
    Infeasible {
        requested: usize,
        achieved: usize,
        total: usize,
        binding: &'static str,
    },
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
}

/// Grammatical case. `Uncertain` marks labels the loader could not resolve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    Nominative,
    Genitive,
    Partitive,
    Illative,
    Inessive,
    Elative,
    Allative,
    Adessive,
    Ablative,
    Essive,
    Translative,
    Abessive,
    Instructive,
    Comitative,
    Uncertain,
}

impl Case {
    pub const ALL: [Case; 15] = [
        Case::Nominative,
        Case::Genitive,
        Case::Partitive,
        Case::Illative,
        Case::Inessive,
        Case::Elative,
        Case::Allative,
        Case::Adessive,
        Case::Ablative,
        Case::Essive,
        Case::Translative,
        Case::Abessive,
        Case::Instructive,
        Case::Comitative,
        Case::Uncertain,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Nominative => "nominative",
            Case::Genitive => "genitive",
            Case::Partitive => "partitive",
            Case::Illative => "illative",
            Case::Inessive => "inessive",
            Case::Elative => "elative",
            Case::Allative => "allative",
            Case::Adessive => "adessive",
            Case::Ablative => "ablative",
            Case::Essive => "essive",
            Case::Translative => "translative",
            Case::Abessive => "abessive",
            Case::Instructive => "instructive",
            Case::Comitative => "comitative",
            Case::Uncertain => "uncertain",
        }
    }

    /// Three-letter abbreviation used in paradigm-cell labels.
    pub fn abbreviation(self) -> &'static str {
        match self {
            Case::Nominative => "nom",
            Case::Genitive => "gen",
            Case::Partitive => "par",
            Case::Illative => "ill",
            Case::Inessive => "ine",
            Case::Elative => "ela",
            Case::Allative => "all",
            Case::Adessive => "ade",
            Case::Ablative => "abl",
            Case::Essive => "ess",
            Case::Translative => "tra",
            Case::Abessive => "abe",
            Case::Instructive => "ins",
            Case::Comitative => "com",
            Case::Uncertain => "unc",
        }
    }

    /// Lenient parse: full names and abbreviations are accepted, anything
    /// else becomes `Uncertain`.
    pub fn parse_lenient(s: &str) -> Case {
        let s = s.trim().to_lowercase();
        Case::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s || c.abbreviation() == s)
            .unwrap_or(Case::Uncertain)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Number {
    Singular,
    Plural,
    Ambiguous,
}

impl Number {
    pub fn abbreviation(self) -> &'static str {
        match self {
            Number::Singular => "sg",
            Number::Plural => "pl",
            Number::Ambiguous => "ambiguous",
        }
    }

    pub fn parse_lenient(s: &str) -> Number {
        match s.trim().to_lowercase().as_str() {
            "sg" | "singular" => Number::Singular,
            "pl" | "plural" => Number::Plural,
            _ => Number::Ambiguous,
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbreviation())
    }
}

/// Dictionary inflectional class, numbered 1 to 51.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InflectionClass {
    Known(u8),
    Unknown,
}

impl InflectionClass {
    pub const MAX: u8 = 51;

    pub fn parse_lenient(s: &str) -> InflectionClass {
        match s.trim().parse::<u8>() {
            Ok(k) if (1..=Self::MAX).contains(&k) => InflectionClass::Known(k),
            _ => InflectionClass::Unknown,
        }
    }

    pub fn id(self) -> Option<u8> {
        match self {
            InflectionClass::Known(k) => Some(k),
            InflectionClass::Unknown => None,
        }
    }
}

impl fmt::Display for InflectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InflectionClass::Known(k) => write!(f, "{k}"),
            InflectionClass::Unknown => f.write_str("unknown"),
        }
    }
}

/// One attested inflected word form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub surface: String,
    pub lexeme: String,
    pub case: Case,
    pub number: Number,
    pub class: InflectionClass,
    pub frequency: u64,
}

/// The identity of an entry: (surface, lexeme, case, number).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryKey {
    pub surface: String,
    pub lexeme: String,
    pub case: Case,
    pub number: Number,
}

impl fmt::Display for EntryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}|{}", self.surface, self.lexeme, self.case, self.number)
    }
}

impl LexiconEntry {
    pub fn key(&self) -> EntryKey {
        EntryKey {
            surface: self.surface.clone(),
            lexeme: self.lexeme.clone(),
            case: self.case,
            number: self.number,
        }
    }

    /// Paradigm-cell label such as `sg_gen` or `pl_ill`. The comitative has
    /// no number contrast and is labelled `sg_pl_com`.
    pub fn cell_label(&self) -> String {
        cell_label(self.case, self.number)
    }
}

pub fn cell_label(case: Case, number: Number) -> String {
    match case {
        Case::Comitative => "sg_pl_com".to_string(),
        _ => format!("{}_{}", number.abbreviation(), case.abbreviation()),
    }
}

/// Lowercase and compose to NFC so that letters such as `ä` are single chars.
pub fn normalize_surface(s: &str) -> String {
    s.trim().to_lowercase().nfc().collect()
}

fn validate_surface(surface: &str) -> Result<(), String> {
    if surface.is_empty() {
        return Err("empty surface form".into());
    }
    if surface.chars().any(char::is_whitespace) {
        return Err(format!("surface `{surface}` contains whitespace"));
    }
    if surface.contains(BOUNDARY) {
        return Err(format!("surface `{surface}` contains the boundary symbol `{BOUNDARY}`"));
    }
    Ok(())
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Vec<LexiconEntry>, LexiconError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| LexiconError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_lexicon(std::io::BufReader::new(file))
}

pub fn read_lexicon<R: Read>(reader: R) -> Result<Vec<LexiconEntry>, LexiconError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != LEXICON_HEADER {
        return Err(LexiconError::Header { found: found.join(",") });
    }

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != LEXICON_HEADER.len() {
            return Err(LexiconError::Malformed {
                line,
                message: format!("expected {} columns, found {}", LEXICON_HEADER.len(), record.len()),
            });
        }
        let surface = normalize_surface(&record[0]);
        validate_surface(&surface).map_err(|message| LexiconError::Malformed { line, message })?;
        let lexeme = record[1].trim().nfc().collect::<String>();
        if lexeme.is_empty() {
            return Err(LexiconError::Malformed {
                line,
                message: "empty lexeme".into(),
            });
        }
        let frequency = u64::from_str(record[5].trim()).map_err(|_| LexiconError::Malformed {
            line,
            message: format!("frequency `{}` is not a non-negative integer", &record[5]),
        })?;
        if frequency == 0 {
            return Err(LexiconError::Malformed {
                line,
                message: "frequency must be at least 1 for an attested form".into(),
            });
        }
        let entry = LexiconEntry {
            surface,
            lexeme,
            case: Case::parse_lenient(&record[2]),
            number: Number::parse_lenient(&record[3]),
            class: InflectionClass::parse_lenient(&record[4]),
            frequency,
        };
        let key = entry.key();
        if !seen.insert(key.clone()) {
            return Err(LexiconError::Duplicate {
                line,
                key: key.to_string(),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_lexicon<W: Write>(writer: W, entries: &[LexiconEntry]) -> Result<(), LexiconError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(LEXICON_HEADER)?;
    for e in entries {
        wtr.write_record([
            e.surface.as_str(),
            e.lexeme.as_str(),
            e.case.name(),
            e.number.abbreviation(),
            &e.class.to_string(),
            &e.frequency.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_lexicon(path: impl AsRef<Path>, entries: &[LexiconEntry]) -> Result<(), LexiconError> {
    let file = std::fs::File::create(path)?;
    write_lexicon(std::io::BufWriter::new(file), entries)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<LexiconEntry>,
    pub test: Vec<LexiconEntry>,
}

/// Entries with frequency above `threshold` train, the rest test.
pub fn split_by_frequency(entries: &[LexiconEntry], threshold: u64) -> DataSplit {
    let (train, test) = entries.iter().cloned().partition(|e| e.frequency > threshold);
    DataSplit { train, test }
}

/// Random hold-out in which every test entry's lexeme, case and number stay
/// attested in the training part.
///
/// Entries are visited in a seeded random order and moved to the test side
/// while all three of their categories keep at least one training member.
/// The target size is `round(test_fraction * n)`; if the constraints stop the
/// split short of it by more than one percent of `n`, the binding constraint
/// is reported as an error. Relative order of the input is kept on both sides.
pub fn split_holdout_constrained(
    entries: &[LexiconEntry],
    test_fraction: f64,
    seed: u64,
) -> Result<DataSplit, LexiconError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(LexiconError::BadFraction(test_fraction));
    }
    let n = entries.len();
    let target = (test_fraction * n as f64).round() as usize;

    let mut lexeme_left: HashMap<&str, usize> = HashMap::new();
    let mut case_left: HashMap<Case, usize> = HashMap::new();
    let mut number_left: HashMap<Number, usize> = HashMap::new();
    for e in entries {
        *lexeme_left.entry(e.lexeme.as_str()).or_default() += 1;
        *case_left.entry(e.case).or_default() += 1;
        *number_left.entry(e.number).or_default() += 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut in_test = vec![false; n];
    let mut taken = 0;
    let mut blocked = [0usize; 3];
    for &i in &order {
        if taken == target {
            break;
        }
        let e = &entries[i];
        let l = lexeme_left[e.lexeme.as_str()];
        let c = case_left[&e.case];
        let m = number_left[&e.number];
        if l < 2 {
            blocked[0] += 1;
            continue;
        }
        if c < 2 {
            blocked[1] += 1;
            continue;
        }
        if m < 2 {
            blocked[2] += 1;
            continue;
        }
        *lexeme_left.get_mut(e.lexeme.as_str()).unwrap() -= 1;
        *case_left.get_mut(&e.case).unwrap() -= 1;
        *number_left.get_mut(&e.number).unwrap() -= 1;
        in_test[i] = true;
        taken += 1;
    }

    if (target - taken) as f64 > 0.01 * n as f64 {
        let binding = ["lexeme", "case", "number"][blocked
            .iter()
            .enumerate()
            .max_by_key(|&(_, b)| *b)
            .map(|(i, _)| i)
            .unwrap_or(0)];
        return Err(LexiconError::Infeasible {
            requested: target,
            achieved: taken,
            total: n,
            binding,
        });
    }

    let mut split = DataSplit {
        train: Vec::with_capacity(n - taken),
        test: Vec::with_capacity(taken),
    };
    for (e, t) in entries.iter().zip(in_test) {
        if t {
            split.test.push(e.clone());
        } else {
            split.train.push(e.clone());
        }
    }
    Ok(split)
}

/// Record written next to split files so they can be regenerated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub method: String,
    pub threshold: Option<u64>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub n_train: usize,
    pub n_test: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "surface,lexeme,case,number,class,frequency\n";

    fn entry(surface: &str, lexeme: &str, case: Case, number: Number, freq: u64) -> LexiconEntry {
        LexiconEntry {
            surface: surface.into(),
            lexeme: lexeme.into(),
            case,
            number,
            class: InflectionClass::Known(1),
            frequency: freq,
        }
    }

    #[test]
    fn parses_row() {
        let data = format!("{HEADER}madon,mato,genitive,sg,1,152\n");
        let entries = read_lexicon(data.as_bytes()).unwrap();
        assert_eq!(
            entries,
            vec![LexiconEntry {
                surface: "madon".into(),
                lexeme: "mato".into(),
                case: Case::Genitive,
                number: Number::Singular,
                class: InflectionClass::Known(1),
                frequency: 152,
            }]
        );
        assert_eq!(entries[0].cell_label(), "sg_gen");
    }

    #[test]
    fn header_only_is_empty() {
        assert!(read_lexicon(HEADER.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn bad_frequency_names_line() {
        let data = format!("{HEADER}mato,mato,nominative,sg,1,3\nmadon,mato,genitive,sg,1,abc\n");
        match read_lexicon(data.as_bytes()) {
            Err(LexiconError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_column_count() {
        let data = format!("{HEADER}mato,mato,nominative,sg,1\n");
        assert!(matches!(
            read_lexicon(data.as_bytes()),
            Err(LexiconError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_key_rejected() {
        let data = format!("{HEADER}mato,mato,nominative,sg,1,3\nMato,mato,nom,sg,1,4\n");
        assert!(matches!(
            read_lexicon(data.as_bytes()),
            Err(LexiconError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn bad_header() {
        assert!(matches!(
            read_lexicon("a,b,c\n".as_bytes()),
            Err(LexiconError::Header { .. })
        ));
    }

    #[test]
    fn unparsable_labels_kept_with_markers() {
        let data = format!("{HEADER}matoine,mato,???,both,x,2\n");
        let e = &read_lexicon(data.as_bytes()).unwrap()[0];
        assert_eq!(e.case, Case::Uncertain);
        assert_eq!(e.number, Number::Ambiguous);
        assert_eq!(e.class, InflectionClass::Unknown);
    }

    #[test]
    fn surfaces_are_composed() {
        // "pöytä" written with combining diaeresis
        let data = format!("{HEADER}po\u{308}yta\u{308},pöytä,nominative,sg,10,5\n");
        let e = &read_lexicon(data.as_bytes()).unwrap()[0];
        assert_eq!(e.surface, "pöytä");
        assert_eq!(e.surface.chars().count(), 5);
    }

    #[test]
    fn boundary_symbol_rejected() {
        let data = format!("{HEADER}ma#to,mato,nominative,sg,1,5\n");
        assert!(read_lexicon(data.as_bytes()).is_err());
    }

    #[test]
    fn frequency_split_boundary() {
        let entries = vec![
            entry("a", "x", Case::Nominative, Number::Singular, 1),
            entry("b", "x", Case::Genitive, Number::Singular, 5),
            entry("c", "x", Case::Partitive, Number::Singular, 6),
        ];
        let split = split_by_frequency(&entries, 5);
        assert_eq!(split.train.iter().map(|e| e.frequency).collect::<Vec<_>>(), [6]);
        assert_eq!(split.test.iter().map(|e| e.frequency).collect::<Vec<_>>(), [1, 5]);
        assert!(split_by_frequency(&entries, 0).test.is_empty());
    }

    #[test]
    fn singleton_lexeme_stays_in_train() {
        let mut entries = vec![entry("yksi", "solo", Case::Nominative, Number::Singular, 1)];
        for (i, case) in [Case::Nominative, Case::Genitive, Case::Partitive].iter().enumerate() {
            for number in [Number::Singular, Number::Plural] {
                entries.push(entry(&format!("w{i}{number}"), "many", *case, number, 2));
            }
        }
        for seed in 0..20 {
            let split = split_holdout_constrained(&entries, 0.3, seed).unwrap();
            assert!(split.train.iter().any(|e| e.lexeme == "solo"));
            assert_eq!(split.test.len(), 2);
        }
    }

    #[test]
    fn infeasible_fraction_reports_constraint() {
        let entries = vec![
            entry("a", "x", Case::Nominative, Number::Singular, 1),
            entry("b", "y", Case::Nominative, Number::Singular, 1),
        ];
        match split_holdout_constrained(&entries, 0.5, 1) {
            Err(LexiconError::Infeasible { binding, .. }) => assert_eq!(binding, "lexeme"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            split_holdout_constrained(&entries, 1.0, 1),
            Err(LexiconError::BadFraction(_))
        ));
    }
}
