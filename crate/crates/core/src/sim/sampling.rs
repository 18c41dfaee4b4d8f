//! Survey designs applied to a realized population.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::error::{Error, Result};

use super::population::Population;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingDesign {
    /// Simple random sample without replacement; a single design stratum.
    Srs,
    /// Equal allocation `n / H` per stratum, units sampled without replacement.
    Stratified,
    /// Whole clusters sampled without replacement within strata until
    /// `n / H` units per stratum are reached.
    StratifiedCluster,
}

/// A drawn sample and the population rows it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub dataset: SurveyDataset,
    pub units: Vec<usize>,
}

/// Covariate columns of every sampled dataset: the stratum-2 indicator, then
/// the population's extra covariates.
pub fn covariate_names(pop: &Population) -> Vec<String> {
    let mut names = vec!["stratum2".to_string()];
    for e in 0..pop.n_extra() {
        names.push(if e % 2 == 0 { format!("x_bin{}", e / 2 + 1) } else { format!("x_norm{}", e / 2 + 1) });
    }
    names
}

fn pick<R: Rng + ?Sized>(pool: &[usize], m: usize, rng: &mut R) -> Vec<usize> {
    let mut v: Vec<usize> = sample(rng, pool.len(), m).into_iter().map(|i| pool[i]).collect();
    v.sort_unstable();
    v
}

pub fn draw_sample<R: Rng + ?Sized>(
    pop: &Population,
    design: SamplingDesign,
    n: usize,
    rng: &mut R,
) -> Result<Sample> {
    let n_pop = pop.n();
    let n_strata = pop.spec.stratum_sizes.len();
    if n == 0 || n > n_pop {
        return Err(Error::invalid(format!("sample size {n} not in 1..={n_pop}")));
    }
    // (unit, weight, design stratum, design cluster)
    let mut rows: Vec<(usize, f64, i64, i64)> = Vec::with_capacity(n);
    match design {
        SamplingDesign::Srs => {
            let all: Vec<usize> = (0..n_pop).collect();
            let w = n_pop as f64 / n as f64;
            rows.extend(pick(&all, n, rng).into_iter().map(|u| (u, w, 1, u as i64 + 1)));
        }
        SamplingDesign::Stratified => {
            if n % n_strata != 0 {
                return Err(Error::invalid(format!("sample size {n} not divisible by {n_strata} strata")));
            }
            let nh = n / n_strata;
            for h in 1..=n_strata as u8 {
                let pool = pop.units_in_stratum(h);
                if nh > pool.len() {
                    return Err(Error::invalid(format!("stratum {h} has only {} units", pool.len())));
                }
                let w = pool.len() as f64 / nh as f64;
                rows.extend(pick(&pool, nh, rng).into_iter().map(|u| (u, w, h as i64, u as i64 + 1)));
            }
        }
        SamplingDesign::StratifiedCluster => {
            if n % n_strata != 0 {
                return Err(Error::invalid(format!("sample size {n} not divisible by {n_strata} strata")));
            }
            let nh = n / n_strata;
            let size = pop.spec.cluster_size;
            let m = nh.div_ceil(size);
            for h in 1..=n_strata as u8 {
                let units = pop.units_in_stratum(h);
                let mut clusters: Vec<u32> = units.iter().map(|&u| pop.cluster[u]).collect();
                clusters.dedup();
                if m > clusters.len() {
                    return Err(Error::invalid(format!(
                        "stratum {h} has only {} clusters, {m} needed",
                        clusters.len()
                    )));
                }
                let w = clusters.len() as f64 / m as f64;
                let idx: Vec<usize> = (0..clusters.len()).collect();
                let chosen: Vec<u32> = pick(&idx, m, rng).into_iter().map(|i| clusters[i]).collect();
                for &u in &units {
                    if chosen.binary_search(&pop.cluster[u]).is_ok() {
                        rows.push((u, w, h as i64, pop.cluster[u] as i64));
                    }
                }
            }
        }
    }

    let j = pop.spec.n_items();
    let n_extra = pop.n_extra();
    let n_out = rows.len();
    let mut ds = SurveyDataset {
        n: n_out,
        n_items: j,
        items: Vec::with_capacity(n_out * j),
        outcome: Vec::with_capacity(n_out),
        n_covariates: 1 + n_extra,
        covariates: Vec::with_capacity(n_out * (1 + n_extra)),
        covariate_names: covariate_names(pop),
        weight: Vec::with_capacity(n_out),
        stratum: Vec::with_capacity(n_out),
        cluster: Vec::with_capacity(n_out),
        item_levels: vec![pop.spec.n_levels; j],
    };
    let mut units = Vec::with_capacity(n_out);
    for (u, w, s, c) in rows {
        ds.items.extend(pop.items[u * j..(u + 1) * j].iter().map(|&x| x as u32));
        ds.outcome.push(pop.outcome[u]);
        ds.covariates.push((pop.stratum[u] == 2) as u8 as f64);
        ds.covariates.extend_from_slice(&pop.extra_covariates[u * n_extra..(u + 1) * n_extra]);
        ds.weight.push(w);
        ds.stratum.push(s);
        ds.cluster.push(c);
        units.push(u);
    }
    Ok(Sample { dataset: ds, units })
}
