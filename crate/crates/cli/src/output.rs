//! CSV tables, plot data and the terminal summary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use nrr_core::metrics::MeanStd;

use crate::experiment::ExperimentReport;

pub const RESULTS_HEADER: &str = "model,seed,turn1_entropy,gate_entropy,context_accuracy";

pub const REPORT_FILE: &str = "report.json";
pub const RESULTS_FILE: &str = "results.csv";
pub const ENTROPY_PLOT_FILE: &str = "plot_turn1_entropy.csv";
pub const P_FINANCIAL_PLOT_FILE: &str = "plot_p_financial.csv";
pub const ACCURACY_PLOT_FILE: &str = "plot_context_accuracy.csv";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per (model, seed).
pub fn results_csv(report: &ExperimentReport) -> String {
    let mut s = String::from(RESULTS_HEADER);
    s.push('\n');
    for r in &report.runs {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.model,
            r.result.seed,
            r.result.turn1_entropy_mean,
            opt(r.result.gate_entropy_mean),
            r.result.context_accuracy
        );
    }
    s
}

fn per_model_stat(report: &ExperimentReport, pick: fn(&nrr_core::metrics::SeedResult) -> f64) -> String {
    let mut s = String::from("model,mean,std,n\n");
    for &m in &report.config.models {
        let xs: Vec<f64> = report.runs_of(m).map(|r| pick(&r.result)).collect();
        let ms = MeanStd::of(&xs);
        let _ = writeln!(s, "{m},{},{},{}", ms.mean, ms.std, xs.len());
    }
    s
}

/// Bar data for mean Turn 1 entropy per model.
pub fn entropy_plot_csv(report: &ExperimentReport) -> String {
    per_model_stat(report, |r| r.turn1_entropy_mean)
}

/// Bar data for context accuracy per model.
pub fn accuracy_plot_csv(report: &ExperimentReport) -> String {
    per_model_stat(report, |r| r.context_accuracy)
}

/// Every Turn 1 P(FINANCIAL), for a histogram.
pub fn p_financial_plot_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("model,seed,episode,p_financial\n");
    for r in &report.runs {
        for (i, p) in r.turn1_p_financial.iter().enumerate() {
            let _ = writeln!(s, "{},{},{i},{p}", r.model, r.result.seed);
        }
    }
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

/// Writes the report, the results table and the three plot files.
pub fn write_all(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(vec![
        write(dir, REPORT_FILE, &report.to_json()?)?,
        write(dir, RESULTS_FILE, &results_csv(report))?,
        write(dir, ENTROPY_PLOT_FILE, &entropy_plot_csv(report))?,
        write(dir, P_FINANCIAL_PLOT_FILE, &p_financial_plot_csv(report))?,
        write(dir, ACCURACY_PLOT_FILE, &accuracy_plot_csv(report))?,
    ])
}

fn mean_std(m: &MeanStd) -> String {
    format!("{:.3} ± {:.3}", m.mean, m.std)
}

/// Human-readable table of per-seed results and aggregates.
pub fn render_table(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>5} {:>14} {:>13} {:>9}",
        "model", "seed", "turn1_entropy", "gate_entropy", "accuracy"
    );
    for r in &report.runs {
        let gate = r
            .result
            .gate_entropy_mean
            .map(|g| format!("{g:.4}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<10} {:>5} {:>14.4} {:>13} {:>9.3}",
            r.model.as_str(),
            r.result.seed,
            r.result.turn1_entropy_mean,
            gate,
            r.result.context_accuracy
        );
    }
    if let Some(summary) = &report.summary {
        s.push('\n');
        for m in &summary.models {
            let gate = m.gate_entropy.as_ref().map(mean_std).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{:<10} H1 {}  gate {}  acc {}",
                m.model,
                mean_std(&m.turn1_entropy),
                gate,
                mean_std(&m.context_accuracy)
            );
        }
        let _ = writeln!(
            s,
            "Welch t = {:.3}, df = {:.2}, p = {:.3e}",
            summary.t_statistic, summary.degrees_of_freedom, summary.p_value
        );
    }
    s
}
