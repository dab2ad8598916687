use std::collections::HashSet;
use std::io::Write;

use dlm_core::embeddings::EmbeddingTable;
use dlm_core::lexicon::{load_lexicon, save_lexicon, split_by_frequency, split_holdout_constrained, SplitManifest};
use serde::Serialize;

use crate::config::{ExperimentConfig, SplitSpec};
use crate::error::CliError;
use crate::workspace::{create, write_json, Workspace};

#[derive(Debug, Serialize)]
struct IngestReport {
    lexicon_entries: usize,
    working_entries: usize,
    dropped_entries: usize,
    distinct_surfaces: usize,
    embedded_surfaces: usize,
    embedding_dim: usize,
    coverage: f64,
}

/// Keep the lexicon entries that have a usable embedding.
pub fn ingest(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let entries = load_lexicon(&cfg.paths.lexicon)?;
    if !cfg.paths.embeddings.exists() {
        return Err(CliError::Data(format!(
            "embedding file {} does not exist",
            cfg.paths.embeddings.display()
        )));
    }
    let mut seen = HashSet::new();
    let surfaces: Vec<String> = entries
        .iter()
        .filter(|e| seen.insert(e.surface.clone()))
        .map(|e| e.surface.clone())
        .collect();
    let table = EmbeddingTable::load(&cfg.paths.embeddings, Some(&seen))?;
    let usable: HashSet<&str> = surfaces
        .iter()
        .filter(|s| table.get(s).is_some_and(|v| v.iter().any(|&x| x != 0.0)))
        .map(String::as_str)
        .collect();
    if usable.is_empty() {
        return Err(CliError::Data(format!(
            "no lexicon word has a vector in {}",
            cfg.paths.embeddings.display()
        )));
    }
    let working: Vec<_> = entries
        .iter()
        .filter(|e| usable.contains(e.surface.as_str()))
        .cloned()
        .collect();

    let dir = ws.open_stage("ingest", cfg)?;
    save_lexicon(ws.working_lexicon_path(), &working)?;
    let order: Vec<&String> = surfaces.iter().filter(|s| usable.contains(s.as_str())).collect();
    let mut w = create(&ws.working_embeddings_path())?;
    table.write(&mut w, &order)?;
    w.flush()?;
    let report = IngestReport {
        lexicon_entries: entries.len(),
        working_entries: working.len(),
        dropped_entries: entries.len() - working.len(),
        distinct_surfaces: surfaces.len(),
        embedded_surfaces: usable.len(),
        embedding_dim: table.dim(),
        coverage: usable.len() as f64 / surfaces.len() as f64,
    };
    write_json(&dir.join("coverage.json"), &report)?;
    Ok(())
}

pub fn split(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (entries, _) = ws.load_working()?;
    let (data, manifest) = match cfg.split {
        SplitSpec::Frequency { threshold } => {
            let s = split_by_frequency(&entries, threshold);
            let m = SplitManifest {
                method: "frequency".into(),
                threshold: Some(threshold),
                fraction: None,
                seed: None,
                n_train: s.train.len(),
                n_test: s.test.len(),
            };
            (s, m)
        }
        SplitSpec::Constrained { fraction } => {
            let s = split_holdout_constrained(&entries, fraction, cfg.seed)?;
            let m = SplitManifest {
                method: "constrained".into(),
                threshold: None,
                fraction: Some(fraction),
                seed: Some(cfg.seed),
                n_train: s.train.len(),
                n_test: s.test.len(),
            };
            (s, m)
        }
    };
    if data.train.is_empty() {
        return Err(CliError::Data("the split leaves no training words".into()));
    }
    let dir = ws.open_stage("split", cfg)?;
    save_lexicon(dir.join("train.csv"), &data.train)?;
    save_lexicon(dir.join("test.csv"), &data.test)?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}
