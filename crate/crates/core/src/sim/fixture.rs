//! The tiny bundled dataset: 60 respondents, 4 items, two well-separated classes.

use crate::data::SurveyDataset;
use crate::dist::rng_stream;
use crate::error::Result;

use super::population::{generate_population, PopulationSpec};
use super::sampling::{draw_sample, SamplingDesign};

pub const FIXTURE_SEED: u64 = 6042;

/// Population behind the fixture. Classes have opposite modal patterns.
pub fn fixture_population_spec() -> PopulationSpec {
    PopulationSpec {
        stratum_sizes: vec![600, 1800],
        class_probs_by_stratum: vec![vec![0.3, 0.7], vec![0.6, 0.4]],
        n_levels: 4,
        modal_patterns: vec![vec![1, 1, 2, 2], vec![4, 4, 3, 3]],
        mode_prob: 0.9,
        linear_predictors: vec![vec![0.8, -0.6], vec![0.3, -1.0]],
        extra_covariate_coefs: Vec::new(),
        cluster_size: 10,
        latent_corr: 0.0,
    }
}

/// Stratified sample of 60 (30 per stratum), fully determined by [`FIXTURE_SEED`].
pub fn tiny_fixture() -> Result<SurveyDataset> {
    let pop = generate_population(&fixture_population_spec(), &mut rng_stream(FIXTURE_SEED, 0))?;
    Ok(draw_sample(&pop, SamplingDesign::Stratified, 60, &mut rng_stream(FIXTURE_SEED, 1))?.dataset)
}
