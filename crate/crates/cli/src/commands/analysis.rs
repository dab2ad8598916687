use std::collections::BTreeMap;
use std::path::Path;

use dlm_core::lexicon::LexiconEntry;
use dlm_core::productivity::{
    class_measures, class_performance, exclude_small_classes, good_turing_unseen, lemma_frequencies_from_forms,
    productivity_correlation_report, read_lemma_frequencies, write_performance_csv, write_productivity_csv,
    ClassProductivity, PerformanceRow, MEASURES,
};
use serde::Serialize;

use super::comprehend::model_name;
use crate::config::{ExperimentConfig, ReportSource};
use crate::error::CliError;
use crate::svg::{scatter_svg, ScatterPlot};
use crate::workspace::{create, write_json, Workspace};

#[derive(Debug, Serialize)]
struct ProductivitySummary {
    lemma_source: String,
    classes: usize,
    excluded_classes: Vec<u8>,
    total_hapaxes: u64,
    good_turing_unseen: f64,
}

/// Measures for every class, and the subset passing `min_types`.
fn measures(
    cfg: &ExperimentConfig,
    entries: &[LexiconEntry],
) -> Result<(Vec<ClassProductivity>, Vec<ClassProductivity>, String), CliError> {
    let (lemma, source) = match &cfg.paths.lemma_frequencies {
        Some(p) => {
            let file = std::fs::File::open(p).map_err(|e| CliError::io(p, e))?;
            (
                read_lemma_frequencies(std::io::BufReader::new(file))?,
                p.display().to_string(),
            )
        }
        None => (
            lemma_frequencies_from_forms(entries),
            "summed form frequencies".to_string(),
        ),
    };
    let all = class_measures(entries, &lemma)?;
    let kept = exclude_small_classes(all.clone(), cfg.productivity.min_types);
    Ok((all, kept, source))
}

pub fn productivity(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (entries, _) = ws.load_working()?;
    let (all, kept, source) = measures(cfg, &entries)?;
    let dir = ws.open_stage("productivity", cfg)?;
    write_productivity_csv(create(&dir.join("productivity.csv"))?, &kept)?;
    let freqs: Vec<u64> = entries.iter().map(|e| e.frequency).collect();
    let summary = ProductivitySummary {
        lemma_source: source,
        classes: kept.len(),
        excluded_classes: all
            .iter()
            .filter(|c| c.v < cfg.productivity.min_types)
            .map(|c| c.class_id)
            .collect(),
        total_hapaxes: all.iter().map(|c| c.v1).sum(),
        good_turing_unseen: good_turing_unseen(&freqs),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

fn read_rows(path: &Path, source: ReportSource) -> Result<Vec<PerformanceRow>, CliError> {
    if !path.exists() {
        let cmd = if source == ReportSource::Production {
            "produce"
        } else {
            "comprehend"
        };
        return Err(CliError::Data(format!(
            "{} not found; run `dlm {cmd}` with the same --out first",
            path.display()
        )));
    }
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{} lacks a `{name}` column", path.display())))
    };
    let key = col("key")?;
    let num = |s: &str| s.parse::<f64>().ok();
    let mut rows = Vec::new();
    if source == ReportSource::Production {
        let (support, correct) = (col("support")?, col("correct")?);
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(PerformanceRow {
                key: rec[key].to_string(),
                correlation: None,
                correct: &rec[correct] == "1",
                support: num(&rec[support]),
            });
        }
    } else {
        let (corr, correct) = (col("correlation")?, col("correct_at_1")?);
        for rec in rdr.records() {
            let rec = rec?;
            rows.push(PerformanceRow {
                key: rec[key].to_string(),
                correlation: num(&rec[corr]),
                correct: &rec[correct] == "1",
                support: None,
            });
        }
    }
    Ok(rows)
}

/// Per-class performance against productivity, with one plot per measure.
pub fn report(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let ws = Workspace::new(cfg);
    let (entries, _) = ws.load_working()?;
    let model = ws.stage("comprehend").join(model_name(cfg.learning, cfg.gram_size));
    let path = match cfg.report.source {
        ReportSource::ComprehensionTrain => model.join("train.csv"),
        ReportSource::ComprehensionTest => model.join("test.csv"),
        ReportSource::Production => ws.stage("produce").join("production.csv"),
    };
    let column = "accuracy";
    let rows = read_rows(&path, cfg.report.source)?;
    let perf = class_performance(&rows, &entries)?;
    let (_, kept, _) = measures(cfg, &entries)?;
    let corr = productivity_correlation_report(&perf, &kept)?;

    let dir = ws.open_stage("report", cfg)?;
    write_performance_csv(create(&dir.join("performance.csv"))?, &perf)?;
    corr.write_csv(create(&dir.join("correlations.csv"))?)?;
    corr.write_scatter_csv(create(&dir.join("scatter.csv"))?)?;
    let stats: BTreeMap<&str, (Option<f64>, Option<f64>)> = corr
        .rows
        .iter()
        .filter(|r| r.performance == column)
        .map(|r| (r.measure.as_str(), (r.rho, r.p_value)))
        .collect();
    for m in MEASURES {
        let points: Vec<(f64, f64, String)> = corr
            .scatter
            .iter()
            .filter(|s| s.performance == column && s.measure == m)
            .map(|s| (s.measure_value, s.performance_value, s.class_id.to_string()))
            .collect();
        let (rho, p) = stats.get(m).copied().unwrap_or((None, None));
        let note = match (rho, p) {
            (Some(r), Some(p)) => format!("Spearman rho = {r:.2}, p = {p:.2e}"),
            _ => "Spearman rho undefined".to_string(),
        };
        let plot = ScatterPlot {
            title: format!("{column} by class against {m}"),
            x_label: m.to_string(),
            y_label: format!("mean {column}"),
            note,
            points,
        };
        std::fs::write(dir.join(format!("{column}_vs_{m}.svg")), scatter_svg(&plot))?;
    }
    Ok(())
}
