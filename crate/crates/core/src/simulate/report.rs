//! Experiment reports: tidy per-replicate records plus per-cell summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::scenario::ScenarioSpec;
use crate::error::Result;
use crate::estimators::normal_quantile;

/// One estimate of one component in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: String,
    /// The varied study parameter (theta, gamma, label count, n or mu).
    pub param: f64,
    pub replicate: usize,
    pub component: usize,
    /// `None` when the estimator failed in this replicate.
    pub estimate: Option<f64>,
    pub truth: Option<f64>,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

/// How squared errors over components combine into one replicate loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Squared Euclidean error of the prevalence vector.
    Sum,
    /// Mean over components, e.g. the integrated error of a curve on a grid.
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub param: f64,
    pub replicates: usize,
    /// Replicates in which the estimator failed; excluded from the means.
    pub failures: usize,
    pub mean_estimate: Option<f64>,
    pub mse: Option<f64>,
    /// Normal-approximation 95% half-width of `mse`.
    pub mse_half_width: Option<f64>,
    pub coverage: Option<f64>,
    pub rejection_rate: Option<f64>,
    /// Marks the parameter value at which the null hypothesis holds.
    pub null_param: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub study: String,
    pub scenario: ScenarioSpec,
    /// Name of the varied parameter.
    pub parameter: String,
    pub seed: u64,
    pub replicates: usize,
    pub loss: Loss,
    pub alpha: Option<f64>,
    pub level: Option<f64>,
    pub summary: Vec<CellSummary>,
    pub records: Vec<Record>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    scenario: &'a str,
    method: &'a str,
    param: f64,
    replicate: usize,
    component: usize,
    estimate: Option<f64>,
    truth: Option<f64>,
    lo: Option<f64>,
    hi: Option<f64>,
}

#[derive(Serialize)]
struct SummaryView<'a> {
    study: &'a str,
    scenario: &'a ScenarioSpec,
    parameter: &'a str,
    seed: u64,
    replicates: usize,
    loss: Loss,
    alpha: Option<f64>,
    level: Option<f64>,
    summary: &'a [CellSummary],
}

fn half_width(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let m = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    Some(normal_quantile(0.975) * (var / n as f64).sqrt())
}

fn mean_of(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

impl ExperimentReport {
    /// Builds a report and its summaries. Cells appear in order of first
    /// appearance in `records`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        study: &str,
        scenario: ScenarioSpec,
        parameter: &str,
        seed: u64,
        replicates: usize,
        loss: Loss,
        alpha: Option<f64>,
        level: Option<f64>,
        null_param: Option<f64>,
        records: Vec<Record>,
    ) -> Self {
        let mut report = Self {
            study: study.to_owned(),
            scenario,
            parameter: parameter.to_owned(),
            seed,
            replicates,
            loss,
            alpha,
            level,
            summary: Vec::new(),
            records,
        };
        let mut cells: Vec<(String, f64)> = Vec::new();
        for r in &report.records {
            if !cells.iter().any(|(m, p)| *m == r.method && *p == r.param) {
                cells.push((r.method.clone(), r.param));
            }
        }
        report.summary = cells
            .into_iter()
            .map(|(method, param)| report.summarize(&method, param, null_param))
            .collect();
        report
    }

    fn cell_records<'a>(&'a self, method: &'a str, param: f64) -> impl Iterator<Item = &'a Record> + 'a {
        self.records
            .iter()
            .filter(move |r| r.method == method && r.param == param)
    }

    /// Loss per successful replicate, in replicate order.
    pub fn replicate_losses(&self, method: &str, param: f64) -> Vec<f64> {
        let mut out: Vec<(usize, f64, usize, bool)> = Vec::new();
        for r in self.cell_records(method, param) {
            let idx = match out.iter().position(|e| e.0 == r.replicate) {
                Some(i) => i,
                None => {
                    out.push((r.replicate, 0.0, 0, true));
                    out.len() - 1
                }
            };
            let entry = &mut out[idx];
            match (r.estimate, r.truth) {
                (Some(e), Some(t)) => {
                    entry.1 += (e - t) * (e - t);
                    entry.2 += 1;
                }
                _ => entry.3 = false,
            }
        }
        out.into_iter()
            .filter(|e| e.3 && e.2 > 0)
            .map(|(_, sq, k, _)| match self.loss {
                Loss::Sum => sq,
                Loss::Mean => sq / k as f64,
            })
            .collect()
    }

    fn summarize(&self, method: &str, param: f64, null_param: Option<f64>) -> CellSummary {
        let records: Vec<&Record> = self.cell_records(method, param).collect();
        let mut reps: Vec<usize> = records.iter().map(|r| r.replicate).collect();
        reps.sort_unstable();
        reps.dedup();
        let mut failed: Vec<usize> = records
            .iter()
            .filter(|r| r.estimate.is_none())
            .map(|r| r.replicate)
            .collect();
        failed.sort_unstable();
        failed.dedup();

        let first: Vec<f64> = records
            .iter()
            .filter(|r| r.component == 0)
            .filter_map(|r| r.estimate)
            .collect();
        let losses = self.replicate_losses(method, param);
        let has_truth = records.iter().any(|r| r.truth.is_some());

        let intervals: Vec<bool> = records
            .iter()
            .filter_map(|r| match (r.lo, r.hi, r.truth) {
                (Some(lo), Some(hi), Some(t)) => Some(lo <= t && t <= hi),
                _ => None,
            })
            .collect();
        let coverage = (!intervals.is_empty())
            .then(|| intervals.iter().filter(|&&c| c).count() as f64 / intervals.len() as f64);
        let rejection_rate = self.alpha.filter(|_| !has_truth).and_then(|alpha| {
            (!first.is_empty()).then(|| first.iter().filter(|&&p| p <= alpha).count() as f64 / first.len() as f64)
        });

        CellSummary {
            method: method.to_owned(),
            param,
            replicates: reps.len(),
            failures: failed.len(),
            mean_estimate: mean_of(&first),
            mse: if has_truth { mean_of(&losses) } else { None },
            mse_half_width: if has_truth { half_width(&losses) } else { None },
            coverage,
            rejection_rate,
            null_param: null_param.map(|p| p == param),
        }
    }

    pub fn cell(&self, method: &str, param: f64) -> Option<&CellSummary> {
        self.summary.iter().find(|c| c.method == method && c.param == param)
    }

    /// Tidy CSV: `scenario,method,param,replicate,component,estimate,truth,lo,hi`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let scenario = self.scenario.kind();
        for r in &self.records {
            w.serialize(CsvRow {
                scenario,
                method: &r.method,
                param: r.param,
                replicate: r.replicate,
                component: r.component,
                estimate: r.estimate,
                truth: r.truth,
                lo: r.lo,
                hi: r.hi,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Everything except the raw records, as pretty JSON.
    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SummaryView {
            study: &self.study,
            scenario: &self.scenario,
            parameter: &self.parameter,
            seed: self.seed,
            replicates: self.replicates,
            loss: self.loss,
            alpha: self.alpha,
            level: self.level,
            summary: &self.summary,
        })?)
    }
}
