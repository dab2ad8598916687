//! Layout of the output directory and the files passed between commands.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dlm_core::embeddings::{EmbeddingTable, SemanticMatrix};
use dlm_core::lexicon::{load_lexicon, DataSplit, LexiconEntry};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Workspace {
            root: cfg.paths.output.clone(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn stage(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Create a stage directory and write its config sidecar.
    pub fn open_stage(&self, name: &str, cfg: &ExperimentConfig) -> Result<PathBuf, CliError> {
        let dir = self.stage(name);
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        write_json(&dir.join("config.json"), cfg)?;
        Ok(dir)
    }

    pub fn working_lexicon_path(&self) -> PathBuf {
        self.stage("ingest").join("lexicon.csv")
    }

    pub fn working_embeddings_path(&self) -> PathBuf {
        self.stage("ingest").join("embeddings.vec")
    }

    /// Working lexicon and its embeddings as written by `ingest`.
    pub fn load_working(&self) -> Result<(Vec<LexiconEntry>, EmbeddingTable), CliError> {
        let lex = self.working_lexicon_path();
        require(&lex, "ingest")?;
        let entries = load_lexicon(&lex)?;
        let emb = self.working_embeddings_path();
        require(&emb, "ingest")?;
        let wanted: HashSet<String> = entries.iter().map(|e| e.surface.clone()).collect();
        let table = EmbeddingTable::load(&emb, Some(&wanted))?;
        Ok((entries, table))
    }

    pub fn load_split(&self) -> Result<DataSplit, CliError> {
        let dir = self.stage("split");
        let train = dir.join("train.csv");
        let test = dir.join("test.csv");
        require(&train, "split")?;
        require(&test, "split")?;
        Ok(DataSplit {
            train: load_lexicon(&train)?,
            test: load_lexicon(&test)?,
        })
    }
}

fn require(path: &Path, command: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{} not found; run `dlm {command}` with the same --out first",
            path.display()
        )))
    }
}

/// Meaning rows for `entries`, keyed by entry key. Every entry must have a vector.
pub fn semantics_for(table: &EmbeddingTable, entries: &[LexiconEntry]) -> Result<SemanticMatrix, CliError> {
    let surfaces: Vec<&str> = entries.iter().map(|e| e.surface.as_str()).collect();
    let (mut s, cov) = table.semantic_matrix(&surfaces);
    if cov.misses > 0 {
        return Err(CliError::Data(format!(
            "{} words lack embeddings (first: `{}`); re-run `dlm ingest`",
            cov.misses, cov.missing[0]
        )));
    }
    s.set_row_ids(entries.iter().map(|e| e.key().to_string()).collect());
    Ok(s)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
