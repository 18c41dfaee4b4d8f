//! End-to-end fitting of the three models on one dataset.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::error::{Error, Result};
use crate::gibbs::{run_two_stage, AdaptiveOutcome, ChainOutput, SamplerData};
use crate::model::{normalize_weights, CodingSpec, McmcConfig, NormalizedWeights, PriorSpec};
use crate::postprocess::adjust::{sandwich_adjust, AdjustDiagnostics};
use crate::postprocess::relabel::relabel;
use crate::postprocess::summary::{summarize, ChainSummary};
use crate::wolca::{fit_wolca, ProbitFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Survey-weighted supervised model with the design-based variance adjustment.
    Swolca,
    /// Unweighted supervised model.
    Solca,
    /// Two-step comparator.
    Wolca,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Solca, ModelKind::Wolca, ModelKind::Swolca];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Swolca => "swolca",
            ModelKind::Solca => "solca",
            ModelKind::Wolca => "wolca",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "swolca" => Ok(ModelKind::Swolca),
            "solca" => Ok(ModelKind::Solca),
            "wolca" => Ok(ModelKind::Wolca),
            other => Err(Error::invalid(format!("unknown model '{other}' (expected swolca, solca or wolca)"))),
        }
    }
}

/// Default prior sized for the adaptive stage.
pub fn default_prior(dataset: &SurveyDataset, coding: &CodingSpec, config: &McmcConfig) -> PriorSpec {
    let max_levels = dataset.item_levels.iter().copied().max().unwrap_or(2);
    PriorSpec::default_for(config.k_max, max_levels, coding.block_width())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOutput {
    pub model: ModelKind,
    pub k_hat: usize,
    pub adaptive: AdaptiveOutcome,
    /// Relabeled kept draws; rescaled when the variance adjustment was applied.
    /// For the two-step model this is the unsupervised chain (`q = 0`).
    pub chain: ChainOutput,
    pub summary: ChainSummary,
    /// Summary of the relabeled draws before the variance adjustment.
    pub unadjusted_summary: Option<ChainSummary>,
    pub adjustment: Option<AdjustDiagnostics>,
    pub probit: Option<ProbitFit>,
    /// 0-based modal class per individual.
    pub modal_class: Vec<usize>,
}

/// Fits `model` with `coding` (its `k` is ignored; the selected K is used).
pub fn fit_model<R: Rng + ?Sized>(
    dataset: &SurveyDataset,
    model: ModelKind,
    coding: &CodingSpec,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<FitOutput> {
    dataset.ensure_valid()?;
    config.validate()?;
    if model == ModelKind::Wolca {
        let fit = fit_wolca(dataset, coding, prior, config, rng)?;
        let chain = fit.step1.relabeled.chain;
        let mut summary = summarize(&chain.draws)?;
        summary.q = coding.block_width();
        summary.xi = fit.step2.intervals();
        summary.xi_prob_positive = Vec::new();
        return Ok(FitOutput {
            model,
            k_hat: fit.step1.adaptive.k_hat,
            adaptive: fit.step1.adaptive,
            chain,
            summary,
            unadjusted_summary: None,
            adjustment: None,
            probit: Some(fit.step2),
            modal_class: fit.step1.modal_class,
        });
    }

    let weights = match model {
        ModelKind::Solca => NormalizedWeights::unit(dataset.n),
        _ => normalize_weights(&dataset.weight)?,
    };
    let data = SamplerData::new(dataset, &coding.with_k(1), weights, true)?;
    let (adaptive, chain) = run_two_stage(&data, prior, config, rng)?;
    let relabeled = relabel(&chain, adaptive.k_hat)?;
    let modal_class = relabeled.modal_classes();
    let chain = relabeled.chain;
    let raw_summary = summarize(&chain.draws)?;

    if model == ModelKind::Swolca && config.adjust_variance {
        let adj = sandwich_adjust(&chain, dataset, coding, prior, config, rng)?;
        let summary = summarize(&adj.chain.draws)?;
        return Ok(FitOutput {
            model,
            k_hat: adaptive.k_hat,
            adaptive,
            chain: adj.chain,
            summary,
            unadjusted_summary: Some(raw_summary),
            adjustment: Some(adj.diagnostics),
            probit: None,
            modal_class,
        });
    }
    Ok(FitOutput {
        model,
        k_hat: adaptive.k_hat,
        adaptive,
        chain,
        summary: raw_summary,
        unadjusted_summary: None,
        adjustment: None,
        probit: None,
        modal_class,
    })
}
