use dlm_core::evaluation::{evaluate_against_pool, EvaluationSummary, Gold};
use dlm_core::lexicon::{InflectionClass, LexiconEntry, Number};
use dlm_core::mappings::{train_network, Learning, LinearMapping, MappingKind};
use dlm_core::production::{produce_batch, FormSource, ProductionSummary, WhatSystem};
use serde::Serialize;

use super::comprehend::{fit_comprehension, forms_for, frequencies, prepare, targets};
use crate::config::{EvaluateOn, ExperimentConfig, WhatSource};
use crate::error::CliError;
use crate::workspace::{create, semantics_for, write_json, Workspace};

#[derive(Debug, Serialize)]
struct ProduceSummary {
    what: WhatSource,
    feedback: Learning,
    evaluated_on: EvaluateOn,
    /// Words dropped for an unknown class or ambiguous number.
    filtered_out: usize,
    /// Nearest-neighbour accuracy of the predicted form vectors.
    what_system: Option<EvaluationSummary>,
    production: ProductionSummary,
}

/// Words eligible for production scoring.
fn eligible(e: &LexiconEntry) -> bool {
    e.class != InflectionClass::Unknown && e.number != Number::Ambiguous
}

pub fn produce(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (working, table) = ws.load_working()?;
    let split = ws.load_split()?;
    let f = prepare(&working, &split.train, &table, cfg.gram_size)?;
    let feedback = fit_comprehension(&f, &split.train, cfg.production.feedback, cfg.mapping.ridge)?;

    let chosen: Vec<LexiconEntry> = match cfg.production.evaluate_on {
        EvaluateOn::Train => split.train.clone(),
        EvaluateOn::Test => split.test.clone(),
        EvaluateOn::All => working.clone(),
    };
    let eval: Vec<LexiconEntry> = chosen.iter().filter(|e| eligible(e)).cloned().collect();
    if eval.is_empty() {
        return Err(CliError::Data("no eligible words to produce".into()));
    }
    let meanings = semantics_for(&table, &eval)?;
    let gold_forms = forms_for(&eval, &f.inventory)?;
    let dir = ws.open_stage("produce", cfg)?;
    let hash = f.inventory.fingerprint();

    let what: Option<Box<dyn WhatSystem>> = match cfg.production.what {
        WhatSource::Gold => None,
        WhatSource::Network => {
            let net = train_network(
                f.sem_train.values(),
                f.sem_train.row_ids(),
                &f.forms_train,
                &cfg.network.train_config(cfg.seed),
            )?;
            net.save(&dir.join("network"), Some(hash.clone()))?;
            Some(Box::new(net))
        }
        WhatSource::Linear => {
            let w = frequencies(&split.train);
            let weights = (cfg.learning == Learning::Fil).then_some(w.as_slice());
            let g = LinearMapping::fit(
                MappingKind::Production,
                f.sem_train.values(),
                &f.forms_train,
                weights,
                cfg.mapping.ridge,
            )?;
            g.save(&dir.join("production"), Some(hash.clone()))?;
            Some(Box::new(g))
        }
    };

    let what_system = match &what {
        None => None,
        Some(w) => {
            let working_forms = forms_for(&working, &f.inventory)?;
            let mut pred = nalgebra::DMatrix::zeros(meanings.nrows(), f.inventory.len());
            for i in 0..meanings.nrows() {
                let row = w.predict_form(&meanings.row(i))?;
                pred.row_mut(i).copy_from_slice(&row);
            }
            let t = targets(&eval, &f.pool_index)?;
            let k = cfg.evaluation.k.min(working_forms.nrows());
            Some(evaluate_against_pool(&pred, Gold::Form(&working_forms), &t, k, None)?.summary)
        }
    };

    let source = match &what {
        None => FormSource::Gold(&gold_forms),
        Some(w) => FormSource::Predicted(w.as_ref()),
    };
    let surfaces: Vec<&str> = eval.iter().map(|e| e.surface.as_str()).collect();
    let report = produce_batch(
        &meanings,
        &surfaces,
        source,
        &feedback,
        &f.inventory,
        &cfg.production.production_config(),
    )?;
    report.write_csv(create(&dir.join("production.csv"))?)?;
    let summary = ProduceSummary {
        what: cfg.production.what,
        feedback: cfg.production.feedback,
        evaluated_on: cfg.production.evaluate_on,
        filtered_out: chosen.len() - eval.len(),
        what_system,
        production: report.summary,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}
