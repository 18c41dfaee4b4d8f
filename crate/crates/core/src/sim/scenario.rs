//! The nine simulation settings and the replicate runner.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::rng_stream;
use crate::error::{Error, Result};
use crate::fit::{default_prior, fit_model, ModelKind};
use crate::model::{CodingSpec, McmcConfig};
use crate::postprocess::summary::ChainSummary;

use super::metrics::{compute_metrics, replicate_metrics, ModelMetrics, ReplicateMetrics, Truth};
use super::population::{generate_population, overlap_patterns, PatternSetting, Population, PopulationSpec};
use super::sampling::{draw_sample, Sample, SamplingDesign};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Association {
    /// Class blocks `(1, stratum2)`.
    Conditional,
    /// Intercept per class; truth is the population class outcome rate.
    Marginal,
    /// Class blocks `(1, stratum2, x_bin1, x_norm1)`.
    Additional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Preset number, if any.
    #[serde(default)]
    pub id: Option<u8>,
    pub design: SamplingDesign,
    pub association: Association,
    pub n: usize,
    pub pattern: PatternSetting,
    pub replicates: usize,
    /// Seeds the population and every replicate stream.
    pub seed: u64,
}

impl ScenarioSpec {
    /// Presets 1-9; scenario 2 is the default setting.
    pub fn preset(id: u8) -> Result<Self> {
        let base = ScenarioSpec {
            id: Some(id),
            design: SamplingDesign::Stratified,
            association: Association::Conditional,
            n: 4000,
            pattern: PatternSetting::Mode85,
            replicates: 100,
            seed: 20_000 + id as u64,
        };
        Ok(match id {
            1 => ScenarioSpec { design: SamplingDesign::Srs, ..base },
            2 => base,
            3 => ScenarioSpec { design: SamplingDesign::StratifiedCluster, ..base },
            4 => ScenarioSpec { association: Association::Marginal, ..base },
            5 => ScenarioSpec { association: Association::Additional, ..base },
            6 => ScenarioSpec { n: 8000, ..base },
            7 => ScenarioSpec { n: 800, ..base },
            8 => ScenarioSpec { pattern: PatternSetting::Mode55, ..base },
            9 => ScenarioSpec { pattern: PatternSetting::Overlap, ..base },
            _ => return Err(Error::invalid(format!("scenario {id} is not one of 1-9"))),
        })
    }

    pub fn label(&self) -> String {
        let design = match self.design {
            SamplingDesign::Srs => "SRS",
            SamplingDesign::Stratified => "Strat",
            SamplingDesign::StratifiedCluster => "Strat Cl",
        };
        let assoc = match self.association {
            Association::Conditional => "Cond",
            Association::Marginal => "Marg",
            Association::Additional => "Add'l",
        };
        let pattern = match self.pattern {
            PatternSetting::Mode85 => "Mode 85%",
            PatternSetting::Mode55 => "Mode 55%",
            PatternSetting::Overlap => "Overlap",
        };
        let prefix = self.id.map(|i| format!("({i}) ")).unwrap_or_default();
        format!("{prefix}{design}, {assoc}, n={}, {pattern}", self.n)
    }

    pub fn population_spec(&self) -> PopulationSpec {
        let mut spec = PopulationSpec { mode_prob: self.pattern.mode_prob(), ..PopulationSpec::default() };
        if self.pattern == PatternSetting::Overlap {
            spec.modal_patterns = overlap_patterns();
        }
        if self.association == Association::Additional {
            spec.extra_covariate_coefs = vec![0.3, -0.2];
        }
        if self.design == SamplingDesign::StratifiedCluster {
            spec.latent_corr = 0.5;
        }
        spec
    }

    /// Coding used to fit sampled datasets, whose covariates are `(stratum2, extras...)`.
    pub fn coding(&self) -> CodingSpec {
        match self.association {
            Association::Conditional => CodingSpec::full(1, 1),
            Association::Marginal => CodingSpec::intercept_only(1, 1),
            Association::Additional => CodingSpec::full(1, 3),
        }
    }

    pub fn truth(&self, pop: &Population) -> Truth {
        let spec = &pop.spec;
        let (xi, q) = match self.association {
            Association::Marginal => (pop.marginal_xi(), 1),
            _ => (spec.conditional_xi(), self.coding().block_width()),
        };
        Truth { pi: spec.average_class_probs(), theta: spec.theta(), xi, q }
    }

    pub fn population(&self) -> Result<Population> {
        generate_population(&self.population_spec(), &mut rng_stream(self.seed, 0))
    }

    /// Sample for replicate `r`, reproducible from `(seed, r)` alone.
    pub fn sample(&self, pop: &Population, r: usize) -> Result<Sample> {
        draw_sample(pop, self.design, self.n, &mut rng_stream(self.seed, replicate_stream(r, 0)))
    }
}

fn replicate_stream(r: usize, slot: u64) -> u64 {
    1 + 8 * r as u64 + slot
}

fn model_slot(model: ModelKind) -> u64 {
    match model {
        ModelKind::Solca => 1,
        ModelKind::Wolca => 2,
        ModelKind::Swolca => 3,
    }
}

/// Name of the pre-adjustment rows reported for the weighted model.
pub const UNADJUSTED: &str = "swolca_unadjusted";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub model: String,
    pub k_hat: Option<usize>,
    pub error: Option<String>,
    pub metrics: Option<ReplicateMetrics>,
    pub summary: Option<ChainSummary>,
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: ScenarioSpec,
    pub label: String,
    pub k_true: usize,
    pub rows: Vec<ModelMetrics>,
}

impl MetricsReport {
    pub fn row(&self, model: &str) -> Option<&ModelMetrics> {
        self.rows.iter().find(|r| r.model == model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub report: MetricsReport,
    pub truth: Truth,
    pub records: Vec<ReplicateRecord>,
}

fn run_replicate(
    spec: &ScenarioSpec,
    pop: &Population,
    truth: &Truth,
    models: &[ModelKind],
    config: &McmcConfig,
    r: usize,
) -> Vec<ReplicateRecord> {
    let failed = |model: &str, e: &Error, secs: f64| ReplicateRecord {
        replicate: r,
        model: model.to_string(),
        k_hat: None,
        error: Some(e.to_string()),
        metrics: None,
        summary: None,
        elapsed_secs: secs,
    };
    let sample = match spec.sample(pop, r) {
        Ok(s) => s,
        Err(e) => return models.iter().map(|m| failed(m.name(), &e, 0.0)).collect(),
    };
    let ds = &sample.dataset;
    let coding = spec.coding();
    let mut out = Vec::new();
    for &model in models {
        let start = Instant::now();
        let mut rng = rng_stream(spec.seed, replicate_stream(r, model_slot(model)));
        let prior = default_prior(ds, &coding, config);
        let fit = fit_model(ds, model, &coding, &prior, config, &mut rng);
        let secs = start.elapsed().as_secs_f64();
        match fit {
            Ok(fit) => {
                let mut push = |name: &str, summary: &ChainSummary| {
                    out.push(match replicate_metrics(summary, truth) {
                        Ok(m) => ReplicateRecord {
                            replicate: r,
                            model: name.to_string(),
                            k_hat: Some(fit.k_hat),
                            error: None,
                            metrics: Some(m),
                            summary: Some(summary.clone()),
                            elapsed_secs: secs,
                        },
                        Err(e) => failed(name, &e, secs),
                    })
                };
                push(model.name(), &fit.summary);
                if let Some(raw) = &fit.unadjusted_summary {
                    push(UNADJUSTED, raw);
                }
            }
            Err(e) => {
                out.push(failed(model.name(), &e, secs));
                if model == ModelKind::Swolca && config.adjust_variance {
                    out.push(failed(UNADJUSTED, &e, secs));
                }
            }
        }
    }
    out
}

/// Generates the population once, then fits every requested model on each
/// replicate sample. Failed fits are recorded and excluded from the metrics.
pub fn run_scenario(spec: &ScenarioSpec, models: &[ModelKind], config: &McmcConfig) -> Result<ScenarioOutput> {
    if spec.replicates == 0 || models.is_empty() {
        return Err(Error::invalid("a scenario needs at least one replicate and one model"));
    }
    config.validate()?;
    let pop = spec.population()?;
    let truth = spec.truth(&pop);
    let records: Vec<ReplicateRecord> = (0..spec.replicates)
        .into_par_iter()
        .flat_map_iter(|r| run_replicate(spec, &pop, &truth, models, config, r))
        .collect();

    let mut names: Vec<&str> = Vec::new();
    for &m in models {
        names.push(m.name());
        if m == ModelKind::Swolca && config.adjust_variance {
            names.push(UNADJUSTED);
        }
    }
    let mut rows = Vec::new();
    for name in names {
        let ok: Vec<ChainSummary> = records
            .iter()
            .filter(|r| r.model == name)
            .filter_map(|r| r.summary.clone())
            .collect();
        let failed = records.iter().filter(|r| r.model == name && r.error.is_some()).count();
        let mut row = if ok.is_empty() {
            ModelMetrics {
                model: name.to_string(),
                replicates: 0,
                failed: 0,
                k_bias: 0.0,
                pi: Default::default(),
                theta: Default::default(),
                xi: Default::default(),
            }
        } else {
            compute_metrics(name, &ok, &truth)?
        };
        row.failed = failed;
        rows.push(row);
    }
    let report = MetricsReport { scenario: spec.clone(), label: spec.label(), k_true: truth.k(), rows };
    Ok(ScenarioOutput { report, truth, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_cover_nine_settings() {
        for id in 1..=9 {
            let s = ScenarioSpec::preset(id).unwrap();
            assert_eq!(s.id, Some(id));
        }
        assert!(ScenarioSpec::preset(10).is_err());
        assert_eq!(ScenarioSpec::preset(7).unwrap().n, 800);
        assert_eq!(ScenarioSpec::preset(3).unwrap().population_spec().latent_corr, 0.5);
        assert_eq!(ScenarioSpec::preset(5).unwrap().coding().block_width(), 4);
    }

    #[test]
    fn samples_are_reproducible_per_replicate() {
        let spec = ScenarioSpec { n: 800, ..ScenarioSpec::preset(2).unwrap() };
        let pop = spec.population().unwrap();
        let a = spec.sample(&pop, 3).unwrap();
        let b = spec.sample(&pop, 3).unwrap();
        let c = spec.sample(&pop, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.units, c.units);
    }

    #[test]
    fn marginal_truth_is_intercept_only() {
        let spec = ScenarioSpec::preset(4).unwrap();
        let pop = spec.population().unwrap();
        let truth = spec.truth(&pop);
        assert_eq!(truth.q, 1);
        assert_eq!(truth.xi.len(), 3);
        // Outcome risk falls from class 1 to class 3.
        assert!(truth.xi[0] > truth.xi[1] && truth.xi[1] > truth.xi[2]);
    }
}
