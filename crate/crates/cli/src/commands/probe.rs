use std::collections::BTreeMap;

use dlm_core::embeddings::compute_shift_vectors;
use dlm_core::probe::{
    probe_by_cell, probe_embeddings, probe_shift_vectors, write_cell_table, ProbeSummary, ProbeTarget,
};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::workspace::{create, semantics_for, write_json, Workspace};

#[derive(Debug, Serialize)]
struct ProbeReport {
    shrinkage: f64,
    embeddings: BTreeMap<String, ProbeSummary>,
    shift_pairs: Option<usize>,
    shift_vectors: BTreeMap<String, ProbeSummary>,
    /// Probes that could not be fitted, with the reason.
    failed: BTreeMap<String, String>,
}

fn target_name(t: ProbeTarget) -> String {
    serde_json::to_value(t)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn probe(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (entries, table) = ws.load_working()?;
    let sem = semantics_for(&table, &entries)?;
    let p = &cfg.probe;
    let mut report = ProbeReport {
        shrinkage: p.shrinkage,
        embeddings: BTreeMap::new(),
        shift_pairs: None,
        shift_vectors: BTreeMap::new(),
        failed: BTreeMap::new(),
    };
    for &t in &p.targets {
        let s = probe_embeddings(&entries, &sem, t, p.shrinkage, p.loocv)?;
        report.embeddings.insert(target_name(t), s);
    }
    if p.shift_vectors {
        let shifts = compute_shift_vectors(&entries, &sem)?;
        report.shift_pairs = Some(shifts.len());
        for t in [ProbeTarget::Class, ProbeTarget::Case] {
            match probe_shift_vectors(&shifts, t, p.shrinkage, p.loocv) {
                Ok(s) => {
                    report.shift_vectors.insert(target_name(t), s);
                }
                Err(e) => {
                    report.failed.insert(format!("shift_{}", target_name(t)), e.to_string());
                }
            }
        }
    }
    let dir = ws.open_stage("probe", cfg)?;
    if p.by_cell {
        let cells = probe_by_cell(&entries, &sem, p.shrinkage, p.min_cell_tokens)?;
        write_cell_table(create(&dir.join("cells.csv"))?, &cells)?;
        write_json(&dir.join("cells.json"), &cells)?;
    }
    write_json(&dir.join("probe.json"), &report)?;
    Ok(())
}
