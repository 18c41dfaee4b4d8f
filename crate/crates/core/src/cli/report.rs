//! JSON artifacts of a fit (`run.json`, `summary.json`, `diagnostics.json`)
//! and the simulation tables (`replicates.csv`, `metrics.md`).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::ModelKind;
use crate::gibbs::AdaptiveOutcome;
use crate::model::{CodingSpec, McmcConfig, ModelParams};
use crate::postprocess::adjust::AdjustDiagnostics;
use crate::postprocess::summary::{outcome_probability, summarize, Interval};
use crate::sim::{MetricsReport, ReplicateRecord};
use crate::wolca::{probit_outcome_probability, ProbitFit};

use super::args::Profile;

/// Everything besides the chain that `summarize` needs to rebuild summary.json.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub model: ModelKind,
    pub input: String,
    pub n: usize,
    pub item_levels: Vec<usize>,
    pub covariate_names: Vec<String>,
    pub coding: CodingSpec,
    pub config: McmcConfig,
    pub k_hat: usize,
    pub adjusted: bool,
    pub profiles: Vec<String>,
    /// Second-step regression of the two-step model.
    pub probit: Option<ProbitFit>,
}

impl RunRecord {
    /// Names of the entries of one class block.
    pub fn block_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        names.extend(self.coding.interacting.iter().map(|&c| self.covariate_names[c].clone()));
        names
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    /// Posterior probability of a positive coefficient; absent for the two-step model.
    pub prob_positive: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    /// 1-based.
    pub class: usize,
    pub pi: Interval,
    pub pi_raw_median: f64,
    /// 1-based modal level per item.
    pub modal_levels: Vec<usize>,
    /// `theta[j][r]`.
    pub theta: Vec<Vec<Interval>>,
    pub xi: Vec<Coefficient>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileProbability {
    pub profile: String,
    pub class: usize,
    pub covariates: BTreeMap<String, f64>,
    pub probability: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub model: ModelKind,
    pub k_hat: usize,
    pub n_draws: usize,
    pub adjusted: bool,
    pub item_levels: Vec<usize>,
    pub block_names: Vec<String>,
    pub classes: Vec<ClassSummary>,
    pub outcome_probabilities: Vec<ProfileProbability>,
}

/// Builds the summary from the stored draws and run record alone.
pub fn summary_report(run: &RunRecord, draws: &[ModelParams], profiles: &[String]) -> Result<SummaryReport> {
    let s = summarize(draws)?;
    if s.k != run.k_hat || s.levels != run.item_levels {
        return Err(Error::invalid("chain does not match run.json (classes or item levels differ)"));
    }
    let names = run.block_names();
    let q = names.len();
    let xi_of = |k: usize| -> Result<Vec<Coefficient>> {
        match &run.probit {
            Some(p) => {
                let iv = p.intervals();
                Ok((0..q)
                    .map(|a| {
                        let i = &iv[k * q + a];
                        Coefficient { name: names[a].clone(), median: i.median, lower: i.lower, upper: i.upper, prob_positive: None }
                    })
                    .collect())
            }
            None if s.q == q => Ok((0..q)
                .map(|a| {
                    let i = &s.xi[k * q + a];
                    Coefficient {
                        name: names[a].clone(),
                        median: i.median,
                        lower: i.lower,
                        upper: i.upper,
                        prob_positive: Some(s.xi_prob_positive[k * q + a]),
                    }
                })
                .collect()),
            None => Err(Error::invalid(format!("chain has {} coefficients per class, run.json names {q}", s.q))),
        }
    };
    let modal = s.modal_levels();
    let layout = s.theta_median();
    let mut classes = Vec::with_capacity(s.k);
    for k in 0..s.k {
        let theta = (0..s.levels.len())
            .map(|j| (0..s.levels[j]).map(|r| s.theta[layout.index(j, k, r)]).collect())
            .collect();
        classes.push(ClassSummary {
            class: k + 1,
            pi: s.pi[k],
            pi_raw_median: s.pi_raw_median[k],
            modal_levels: modal.iter().map(|row| row[k] + 1).collect(),
            theta,
            xi: xi_of(k)?,
        });
    }

    let mut probs = Vec::new();
    for text in profiles {
        let profile = Profile::parse(text)?;
        let cov = profile.covariates(&run.covariate_names)?;
        let block = run.coding.block(&cov);
        let targets: Vec<usize> = match profile.class {
            Some(c) if c > s.k => {
                return Err(Error::invalid(format!("profile class {c} exceeds the {} fitted classes", s.k)))
            }
            Some(c) => vec![c - 1],
            None => (0..s.k).collect(),
        };
        for k in targets {
            let probability = match &run.probit {
                Some(p) => probit_outcome_probability(p, q, k, &block)?,
                None => outcome_probability(draws, k, &block)?,
            };
            probs.push(ProfileProbability {
                profile: text.clone(),
                class: k + 1,
                covariates: run.covariate_names.iter().cloned().zip(cov.iter().copied()).collect(),
                probability,
            });
        }
    }

    Ok(SummaryReport {
        model: run.model,
        k_hat: s.k,
        n_draws: s.n_draws,
        adjusted: run.adjusted,
        item_levels: s.levels,
        block_names: names,
        classes,
        outcome_probabilities: probs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitDiagnostics {
    pub iterations: usize,
    pub gradient_norm: f64,
    pub df: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub model: ModelKind,
    pub adaptive: AdaptiveOutcome,
    pub n_draws: usize,
    pub elapsed_secs: f64,
    pub adjustment: Option<AdjustDiagnostics>,
    /// Coefficient intervals before the variance adjustment.
    pub unadjusted_xi: Option<Vec<Interval>>,
    pub probit: Option<ProbitDiagnostics>,
}

pub fn replicates_csv(records: &[ReplicateRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "replicate", "model", "k_hat", "error", "pi_bias", "pi_width", "pi_coverage", "theta_bias",
        "theta_width", "theta_coverage", "xi_bias", "xi_width", "xi_coverage", "elapsed_secs",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        let m = r.metrics.as_ref();
        let block = |f: fn(&crate::sim::metrics::ReplicateMetrics) -> crate::sim::BlockMetrics| {
            m.map(|m| {
                let b = f(m);
                [Some(b.bias), Some(b.width), Some(b.coverage)]
            })
            .unwrap_or([None; 3])
        };
        let mut row = vec![
            (r.replicate + 1).to_string(),
            r.model.clone(),
            r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ];
        for b in [block(|m| m.pi), block(|m| m.theta), block(|m| m.xi)] {
            row.extend(b.into_iter().map(opt));
        }
        row.push(r.elapsed_secs.to_string());
        w.write_record(&row)?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?)
        .map_err(|e| Error::invalid(e.to_string()))
}

/// Markdown table with the absolute bias, interval width and coverage columns.
pub fn metrics_markdown(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "## {}\n", report.label);
    let _ = writeln!(
        s,
        "| Model | Fits | Failed | K bias | pi bias | theta bias | xi bias | pi width | theta width | xi width | pi cov | theta cov | xi cov |"
    );
    let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.model,
            r.replicates,
            r.failed,
            r.k_bias,
            r.pi.bias,
            r.theta.bias,
            r.xi.bias,
            r.pi.width,
            r.theta.width,
            r.xi.width,
            r.pi.coverage,
            r.theta.coverage,
            r.xi.coverage
        );
    }
    s
}
