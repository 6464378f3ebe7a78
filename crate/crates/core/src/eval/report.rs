//! Heatmap CSV, summary and test-result JSON, and Markdown tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::stats::{ks_two_sample, mann_whitney_u, Alternative};
use crate::eval::sweep::{Cell, Summary, SweepResult};

pub const HEATMAP_HEADER: &str = "omega,delta,auc";

/// `omega,delta,auc`, one row per cell in grid order. Values use Rust's
/// shortest round-trip formatting, so parsing the file back gives the same
/// bits; invalid cells are written as `NaN`.
pub fn heatmap_csv(cells: &[Cell]) -> String {
    let mut out = String::from(HEATMAP_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(out, "{},{},{}", c.omega, c.delta, c.auc);
    }
    out
}

pub fn parse_heatmap_csv(text: &str) -> Result<Vec<Cell>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("heatmap header: {e}")))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["omega", "delta", "auc"] {
        return Err(Error::Schema(format!(
            "heatmap header must be `{HEATMAP_HEADER}`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cells = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("`{}` is not a number", &rec[k]),
            })
        };
        let (omega, delta, auc) = (num(0)?, num(1)?, num(2)?);
        if !(auc.is_nan() || (0.0..=1.0).contains(&auc)) {
            return Err(Error::Parse {
                line,
                msg: format!("auc {auc} outside [0, 1]"),
            });
        }
        cells.push(Cell {
            omega,
            delta,
            auc,
            note: None,
        });
    }
    Ok(cells)
}

/// Summary JSON: `{mu, sigma, median, min:{value,omega,delta}, max:{..}, valid_cells}`,
/// or `null` when no cell is valid.
pub fn summary_json(summary: Option<&Summary>) -> String {
    serde_json::to_string_pretty(&summary).expect("summary serializes")
}

/// Mann-Whitney and KS comparison of two heatmaps, columns as in the
/// paper's test table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub attack: String,
    pub u_statistic: f64,
    pub u_pvalue: f64,
    pub ks_statistic: f64,
    pub ks_pvalue: f64,
    /// Valid cells per heatmap.
    pub n_a: usize,
    pub n_b: usize,
}

/// One-sided test that `b` (combined setting) scores higher than `a`
/// (baseline). Both heatmaps must cover the same cells; NaN cells are left
/// out of each sample.
pub fn compare_cells(attack: &str, a: &[Cell], b: &[Cell]) -> Result<TestResult> {
    let key = |c: &Cell| (c.omega.to_bits(), c.delta.to_bits());
    let mut ka: Vec<_> = a.iter().map(key).collect();
    let mut kb: Vec<_> = b.iter().map(key).collect();
    ka.sort_unstable();
    kb.sort_unstable();
    if ka != kb {
        return Err(Error::invalid("compare", "heatmaps cover different (omega, delta) grids"));
    }
    let va: Vec<f64> = a.iter().map(|c| c.auc).filter(|v| !v.is_nan()).collect();
    let vb: Vec<f64> = b.iter().map(|c| c.auc).filter(|v| !v.is_nan()).collect();
    let mw = mann_whitney_u(&vb, &va, Alternative::Greater)?;
    let ks = ks_two_sample(&vb, &va)?;
    Ok(TestResult {
        attack: attack.to_string(),
        u_statistic: mw.u,
        u_pvalue: mw.p,
        ks_statistic: ks.d,
        ks_pvalue: ks.p,
        n_a: va.len(),
        n_b: vb.len(),
    })
}

/// [`compare_cells`] for two sweeps of the same attack.
pub fn compare_settings(a: &SweepResult, b: &SweepResult) -> Result<TestResult> {
    if a.attack != b.attack {
        return Err(Error::invalid(
            "compare",
            format!("attacks differ: {} vs {}", a.attack, b.attack),
        ));
    }
    compare_cells(&a.attack, &a.cells, &b.cells)
}

fn fmt_p(p: f64) -> String {
    if p == 0.0 || p >= 1e-3 {
        format!("{p:.4}")
    } else {
        format!("{p:.2e}")
    }
}

/// Table of setting rows by attack columns with `mu`, `sigma`, `median`,
/// `min` and `max` per heatmap, plus the mean and standard deviation of the
/// maxima per row and per column.
pub fn summary_table(results: &[SweepResult]) -> String {
    let mut attacks: Vec<&str> = Vec::new();
    let mut settings = Vec::new();
    for r in results {
        if !attacks.contains(&r.attack.as_str()) {
            attacks.push(&r.attack);
        }
        if !settings.contains(&r.setting) {
            settings.push(r.setting);
        }
    }
    let find = |s, a: &str| results.iter().find(|r| r.setting == s && r.attack == a);
    let mean_sd = |v: &[f64]| -> String {
        if v.is_empty() {
            return "n/a".into();
        }
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        format!("mean max = {m:.2}<br>sd max = {sd:.2}")
    };
    let mut out = String::from("| Setting |");
    for a in &attacks {
        let _ = write!(out, " {a} |");
    }
    out.push_str(" Setting max |\n|---|");
    out.push_str(&"---|".repeat(attacks.len() + 1));
    out.push('\n');
    for &s in &settings {
        let _ = write!(out, "| {s} |");
        let mut maxima = Vec::new();
        for a in &attacks {
            match find(s, a).and_then(|r| r.summary) {
                Some(m) => {
                    maxima.push(m.max.value);
                    let _ = write!(
                        out,
                        " mu = {:.2}<br>sigma = {:.2}<br>median = {:.2}<br>min = {:.2} ({},{})<br>max = {:.2} ({},{}) |",
                        m.mu, m.sigma, m.median, m.min.value, m.min.omega, m.min.delta, m.max.value, m.max.omega, m.max.delta
                    );
                }
                None => out.push_str(" n/a |"),
            }
        }
        let _ = writeln!(out, " {} |", mean_sd(&maxima));
    }
    out.push_str("| Attack max |");
    for a in &attacks {
        let maxima: Vec<f64> = settings
            .iter()
            .filter_map(|&s| find(s, a).and_then(|r| r.summary).map(|m| m.max.value))
            .collect();
        let _ = write!(out, " {} |", mean_sd(&maxima));
    }
    out.push_str(" |\n");
    out
}

/// Table of Mann-Whitney and KS results, one row per attack.
pub fn test_table(tests: &[TestResult]) -> String {
    let mut out = String::from(
        "| Attack | U statistic | U p-value | KS statistic | KS p-value |\n|---|---|---|---|---|\n",
    );
    for t in tests {
        let _ = writeln!(
            out,
            "| {} | {:.1} | {} | {:.3} | {} |",
            t.attack,
            t.u_statistic,
            fmt_p(t.u_pvalue),
            t.ks_statistic,
            fmt_p(t.ks_pvalue)
        );
    }
    out
}

/// Full Markdown report: the summary table, then the tests table when any
/// comparisons are given.
pub fn markdown_report(results: &[SweepResult], tests: &[TestResult]) -> String {
    let mut out = String::from("## AUC-ROC summary\n\n");
    out.push_str(&summary_table(results));
    if !tests.is_empty() {
        out.push_str("\n## Setting comparison\n\n");
        out.push_str(&test_table(tests));
    }
    let invalid: Vec<String> = results
        .iter()
        .flat_map(|r| {
            r.cells.iter().filter(|c| c.auc.is_nan()).map(move |c| {
                format!(
                    "- {} / {} at ({},{}): {}",
                    r.attack,
                    r.setting,
                    c.omega,
                    c.delta,
                    c.note.as_deref().unwrap_or("invalid")
                )
            })
        })
        .collect();
    if !invalid.is_empty() {
        out.push_str("\n## Invalid cells\n\n");
        out.push_str(&invalid.join("\n"));
        out.push('\n');
    }
    out
}
