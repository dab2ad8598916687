use std::collections::HashMap;
use std::io::Write;

use dlm_core::cues::{build_form_matrix, CueInventory, FormMatrix, OovPolicy};
use dlm_core::embeddings::SemanticMatrix;
use dlm_core::evaluation::{evaluate_against_pool, EvaluationReport, EvaluationSummary, Gold};
use dlm_core::lexicon::LexiconEntry;
use dlm_core::mappings::{Learning, LinearMapping, MappingKind};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::workspace::{create, semantics_for, write_json, Workspace};

/// Directory name of one comprehension model, e.g. `EOL3`.
pub fn model_name(learning: Learning, n: usize) -> String {
    format!("{learning}{n}")
}

/// Everything a fitted model was built from.
pub(crate) struct Fitted {
    pub inventory: CueInventory,
    pub forms_train: FormMatrix,
    pub sem_train: SemanticMatrix,
    pub pool: SemanticMatrix,
    pub pool_index: HashMap<String, usize>,
}

pub(crate) fn frequencies(entries: &[LexiconEntry]) -> Vec<f64> {
    entries.iter().map(|e| e.frequency as f64).collect()
}

pub(crate) fn forms_for(entries: &[LexiconEntry], inv: &CueInventory) -> Result<FormMatrix, CliError> {
    let surfaces: Vec<&str> = entries.iter().map(|e| e.surface.as_str()).collect();
    let (mut c, _) = build_form_matrix(&surfaces, inv, OovPolicy::Strict)?;
    c.set_row_ids(entries.iter().map(|e| e.key().to_string()).collect());
    Ok(c)
}

/// Cue inventory over the whole working lexicon and the training matrices.
pub(crate) fn prepare(
    working: &[LexiconEntry],
    train: &[LexiconEntry],
    table: &dlm_core::embeddings::EmbeddingTable,
    n: usize,
) -> Result<Fitted, CliError> {
    let surfaces: Vec<&str> = working.iter().map(|e| e.surface.as_str()).collect();
    let inventory = CueInventory::build(&surfaces, n)?;
    let forms_train = forms_for(train, &inventory)?;
    let sem_train = semantics_for(table, train)?;
    let pool = semantics_for(table, working)?;
    let pool_index = pool.row_ids().iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
    Ok(Fitted {
        inventory,
        forms_train,
        sem_train,
        pool,
        pool_index,
    })
}

pub(crate) fn targets(entries: &[LexiconEntry], index: &HashMap<String, usize>) -> Result<Vec<usize>, CliError> {
    entries
        .iter()
        .map(|e| {
            let k = e.key().to_string();
            index
                .get(&k)
                .copied()
                .ok_or_else(|| CliError::Data(format!("split entry `{k}` is not in the working lexicon")))
        })
        .collect()
}

pub(crate) fn fit_comprehension(
    f: &Fitted,
    train: &[LexiconEntry],
    learning: Learning,
    ridge: f64,
) -> Result<LinearMapping, CliError> {
    let w = frequencies(train);
    let weights = (learning == Learning::Fil).then_some(w.as_slice());
    Ok(LinearMapping::fit(
        MappingKind::Comprehension,
        &f.forms_train,
        f.sem_train.values(),
        weights,
        ridge,
    )?)
}

#[derive(Debug, Serialize)]
struct ModelSummary {
    model: String,
    learning: Learning,
    gram_size: usize,
    cues: usize,
    cue_inventory_hash: String,
    train: EvaluationSummary,
    test: Option<EvaluationSummary>,
}

fn evaluate(
    mapping: &LinearMapping,
    f: &Fitted,
    entries: &[LexiconEntry],
    k: usize,
) -> Result<Option<EvaluationReport>, CliError> {
    if entries.is_empty() {
        return Ok(None);
    }
    let forms = forms_for(entries, &f.inventory)?;
    let pred = mapping.apply(&forms)?;
    let t = targets(entries, &f.pool_index)?;
    let freqs = frequencies(entries);
    Ok(Some(evaluate_against_pool(
        &pred,
        Gold::Semantic(&f.pool),
        &t,
        k,
        Some(&freqs),
    )?))
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Fit F on the training words and evaluate it on both parts of the split.
pub fn comprehend(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (working, table) = ws.load_working()?;
    let split = ws.load_split()?;
    let runs: Vec<(Learning, usize)> = if cfg.comprehension.grid {
        vec![
            (Learning::Eol, 3),
            (Learning::Eol, 4),
            (Learning::Fil, 3),
            (Learning::Fil, 4),
        ]
    } else {
        vec![(cfg.learning, cfg.gram_size)]
    };
    let dir = ws.open_stage("comprehend", cfg)?;
    let mut grid = csv::Writer::from_writer(create(&dir.join("grid.csv"))?);
    grid.write_record([
        "model",
        "train_type_at_1",
        "train_type_at_k",
        "train_token_at_1",
        "test_type_at_1",
        "test_type_at_k",
    ])?;
    let mut prepared: HashMap<usize, Fitted> = HashMap::new();
    for (learning, n) in runs {
        if let std::collections::hash_map::Entry::Vacant(slot) = prepared.entry(n) {
            slot.insert(prepare(&working, &split.train, &table, n)?);
        }
        let f = &prepared[&n];
        let name = model_name(learning, n);
        let mdir = ws.open_stage(&format!("comprehend/{name}"), cfg)?;
        let mapping = fit_comprehension(f, &split.train, learning, cfg.mapping.ridge)?;
        let hash = f.inventory.fingerprint();
        let mut w = create(&mdir.join("cues.txt"))?;
        f.inventory.write(&mut w)?;
        w.flush()?;
        mapping.save(&mdir.join("comprehension"), Some(hash.clone()))?;

        let train = evaluate(&mapping, f, &split.train, cfg.evaluation.k)?.expect("training part is non-empty");
        train.write_csv(create(&mdir.join("train.csv"))?)?;
        let test = evaluate(&mapping, f, &split.test, cfg.evaluation.k)?;
        if let Some(t) = &test {
            t.write_csv(create(&mdir.join("test.csv"))?)?;
        }
        let s = ModelSummary {
            model: name.clone(),
            learning,
            gram_size: n,
            cues: f.inventory.len(),
            cue_inventory_hash: hash,
            train: train.summary.clone(),
            test: test.as_ref().map(|t| t.summary.clone()),
        };
        write_json(&mdir.join("summary.json"), &s)?;
        let na = || "NA".to_string();
        grid.write_record([
            name,
            pct(train.summary.type_accuracy_at_1),
            pct(train.summary.type_accuracy_at_k),
            train.summary.token_accuracy_at_1.map(pct).unwrap_or_else(na),
            test.as_ref()
                .map(|t| pct(t.summary.type_accuracy_at_1))
                .unwrap_or_else(na),
            test.as_ref()
                .map(|t| pct(t.summary.type_accuracy_at_k))
                .unwrap_or_else(na),
        ])?;
    }
    grid.flush()?;
    Ok(())
}
