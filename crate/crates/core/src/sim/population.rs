//! Finite population with two strata, equal-size clusters, three latent
//! patterns, and a probit outcome whose class effects are modified by stratum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{categorical_unnormalized, norm_cdf, norm_quantile, std_normal};
use crate::error::{Error, Result};
use crate::model::{check_simplex, ThetaArray};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternSetting {
    /// Modal level probability 0.85, others 0.05.
    Mode85,
    /// Modal level probability 0.55, others 0.15.
    Mode55,
    /// Mode 0.85; classes 1 and 2 differ only on items 1-5.
    Overlap,
}

impl PatternSetting {
    pub fn mode_prob(self) -> f64 {
        match self {
            PatternSetting::Mode55 => 0.55,
            _ => 0.85,
        }
    }
}

/// Modal levels (1-based) per class and item for the three default patterns.
pub fn default_patterns() -> Vec<Vec<usize>> {
    let p1 = (0..30).map(|j| if j < 15 { 1 } else { 3 }).collect();
    let p2 = (0..30).map(|j| if j < 6 { 4 } else { 2 }).collect();
    let p3 = (0..30)
        .map(|j| match j {
            0..=8 => 3,
            9..=20 => 4,
            _ => 1,
        })
        .collect();
    vec![p1, p2, p3]
}

/// Overlap patterns: class 2 copies class 1 except on the first five items.
pub fn overlap_patterns() -> Vec<Vec<usize>> {
    let mut p = default_patterns();
    let mut p2 = p[0].clone();
    for level in p2.iter_mut().take(5) {
        *level = 4;
    }
    p[1] = p2;
    p
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub stratum_sizes: Vec<usize>,
    pub class_probs_by_stratum: Vec<Vec<f64>>,
    pub n_levels: usize,
    /// `modal_patterns[k][j]`: 1-based modal level of item `j` in class `k`.
    pub modal_patterns: Vec<Vec<usize>>,
    pub mode_prob: f64,
    /// `linear_predictors[h][k]`: probit linear predictor for stratum `h`, class `k`.
    pub linear_predictors: Vec<Vec<f64>>,
    /// Coefficients of extra covariates, alternating Bernoulli(0.5) and N(0, 1).
    pub extra_covariate_coefs: Vec<f64>,
    pub cluster_size: usize,
    /// Exchangeable latent correlation of outcomes within a cluster; 0 gives
    /// independent outcomes.
    pub latent_corr: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            stratum_sizes: vec![20_000, 60_000],
            class_probs_by_stratum: vec![vec![0.2, 0.4, 0.4], vec![0.7, 0.2, 0.1]],
            n_levels: 4,
            modal_patterns: default_patterns(),
            mode_prob: 0.85,
            linear_predictors: vec![vec![1.0, 0.3, -0.5], vec![0.5, -0.7, -1.3]],
            extra_covariate_coefs: Vec::new(),
            cluster_size: 50,
            latent_corr: 0.0,
        }
    }
}

impl PopulationSpec {
    pub fn n_pop(&self) -> usize {
        self.stratum_sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.modal_patterns.len()
    }

    pub fn n_items(&self) -> usize {
        self.modal_patterns.first().map_or(0, |p| p.len())
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let h = self.stratum_sizes.len();
        if k == 0 || self.n_items() == 0 || h == 0 {
            return Err(Error::invalid("population needs classes, items and strata"));
        }
        if self.class_probs_by_stratum.len() != h || self.linear_predictors.len() != h {
            return Err(Error::invalid("per-stratum tables must have one row per stratum"));
        }
        for (s, row) in self.class_probs_by_stratum.iter().enumerate() {
            if row.len() != k {
                return Err(Error::invalid("class probabilities must have one entry per class"));
            }
            check_simplex(row, &format!("class probabilities of stratum {}", s + 1))?;
        }
        if self.linear_predictors.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("linear predictors must have one entry per class"));
        }
        if self.modal_patterns.iter().any(|p| {
            p.len() != self.n_items() || p.iter().any(|&l| l == 0 || l > self.n_levels)
        }) {
            return Err(Error::invalid("modal patterns must cover every item with a valid level"));
        }
        if !(self.mode_prob > 0.0 && self.mode_prob < 1.0) || self.n_levels < 2 {
            return Err(Error::invalid("mode probability must lie in (0, 1)"));
        }
        if self.cluster_size == 0 || self.stratum_sizes.iter().any(|&s| s == 0 || s % self.cluster_size != 0) {
            return Err(Error::invalid("stratum sizes must be positive multiples of the cluster size"));
        }
        if !(0.0..=1.0).contains(&self.latent_corr) {
            return Err(Error::invalid("latent correlation must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Item-response probabilities implied by the modal patterns.
    pub fn theta(&self) -> ThetaArray {
        let levels = vec![self.n_levels; self.n_items()];
        let other = (1.0 - self.mode_prob) / (self.n_levels - 1) as f64;
        ThetaArray::new(&levels, self.k(), |j, k, r| {
            if self.modal_patterns[k][j] == r + 1 {
                self.mode_prob
            } else {
                other
            }
        })
    }

    /// Population-average class shares `sum_h (N_h / N) pi_h`.
    pub fn average_class_probs(&self) -> Vec<f64> {
        let n = self.n_pop() as f64;
        (0..self.k())
            .map(|k| {
                self.stratum_sizes
                    .iter()
                    .zip(&self.class_probs_by_stratum)
                    .map(|(&nh, p)| nh as f64 / n * p[k])
                    .sum()
            })
            .collect()
    }

    /// Class blocks `(intercept, stratum-2 shift, extra coefficients...)` under
    /// a coding with covariates `(stratum2, extras...)`. Requires two strata.
    pub fn conditional_xi(&self) -> Vec<f64> {
        let mut xi = Vec::new();
        for k in 0..self.k() {
            let base = self.linear_predictors[0][k];
            xi.push(base);
            if self.stratum_sizes.len() > 1 {
                xi.push(self.linear_predictors[1][k] - base);
            }
            xi.extend_from_slice(&self.extra_covariate_coefs);
        }
        xi
    }
}

/// Realized population. Indices are 0-based; strata and levels 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub spec: PopulationSpec,
    pub stratum: Vec<u8>,
    /// 1-based cluster id, unique across strata.
    pub cluster: Vec<u32>,
    pub class: Vec<u8>,
    /// Row-major `N x J`, 1-based levels.
    pub items: Vec<u8>,
    /// Row-major `N x n_extra`.
    pub extra_covariates: Vec<f64>,
    pub outcome_prob: Vec<f64>,
    pub outcome: Vec<u8>,
}

impl Population {
    pub fn n(&self) -> usize {
        self.stratum.len()
    }

    pub fn n_extra(&self) -> usize {
        self.spec.extra_covariate_coefs.len()
    }

    pub fn units_in_stratum(&self, h: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.stratum[i] == h).collect()
    }

    /// Realized outcome rate per class.
    pub fn class_outcome_rates(&self) -> Vec<f64> {
        let k = self.spec.k();
        let mut ones = vec![0usize; k];
        let mut tot = vec![0usize; k];
        for (c, y) in self.class.iter().zip(&self.outcome) {
            tot[*c as usize] += 1;
            ones[*c as usize] += *y as usize;
        }
        ones.iter().zip(&tot).map(|(&a, &b)| a as f64 / b.max(1) as f64).collect()
    }

    /// Intercept-only class coefficients `Phi^-1(rate_k)` matching the
    /// realized marginal outcome rate of each class.
    pub fn marginal_xi(&self) -> Vec<f64> {
        self.class_outcome_rates().into_iter().map(norm_quantile).collect()
    }

    /// Realized class shares.
    pub fn class_shares(&self) -> Vec<f64> {
        let k = self.spec.k();
        let mut c = vec![0usize; k];
        for &x in &self.class {
            c[x as usize] += 1;
        }
        c.into_iter().map(|v| v as f64 / self.n() as f64).collect()
    }
}

/// Binary outcomes sharing one latent factor: `y_i = I(sqrt(rho) u + sqrt(1 - rho) e_i <= Phi^-1(p_i))`.
pub fn correlated_outcomes<R: Rng + ?Sized>(p: &[f64], rho: f64, rng: &mut R) -> Result<Vec<u8>> {
    if let Some(bad) = p.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::invalid(format!("outcome probability {bad} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::invalid(format!("latent correlation {rho} outside [0, 1]")));
    }
    let u = std_normal(rng);
    let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
    Ok(p.iter()
        .map(|&pi| {
            let e = std_normal(rng);
            (a * u + b * e <= norm_quantile(pi)) as u8
        })
        .collect())
}

pub fn generate_population<R: Rng + ?Sized>(spec: &PopulationSpec, rng: &mut R) -> Result<Population> {
    spec.validate()?;
    let n = spec.n_pop();
    let j = spec.n_items();
    let n_extra = spec.extra_covariate_coefs.len();
    let theta = spec.theta();
    let mut stratum = Vec::with_capacity(n);
    let mut cluster = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    let mut items = Vec::with_capacity(n * j);
    let mut extra = Vec::with_capacity(n * n_extra);
    let mut prob = Vec::with_capacity(n);
    let mut next_cluster = 1u32;
    for (h, &nh) in spec.stratum_sizes.iter().enumerate() {
        let pi = &spec.class_probs_by_stratum[h];
        for t in 0..nh {
            stratum.push((h + 1) as u8);
            cluster.push(next_cluster + (t / spec.cluster_size) as u32);
            let c = categorical_unnormalized(pi, 1.0, rng);
            class.push(c as u8);
            for jj in 0..j {
                items.push(categorical_unnormalized(theta.simplex(jj, c), 1.0, rng) as u8 + 1);
            }
            let mut lp = spec.linear_predictors[h][c];
            for (e, coef) in spec.extra_covariate_coefs.iter().enumerate() {
                let v = if e % 2 == 0 {
                    rng.random_bool(0.5) as u8 as f64
                } else {
                    std_normal(rng)
                };
                extra.push(v);
                lp += coef * v;
            }
            prob.push(norm_cdf(lp));
        }
        next_cluster += (nh / spec.cluster_size) as u32;
    }
    let outcome = if spec.latent_corr > 0.0 {
        let mut y = Vec::with_capacity(n);
        for members in prob.chunks(spec.cluster_size) {
            y.extend(correlated_outcomes(members, spec.latent_corr, rng)?);
        }
        y
    } else {
        prob.iter().map(|&p| rng.random_bool(p) as u8).collect()
    };
    Ok(Population {
        spec: spec.clone(),
        stratum,
        cluster,
        class,
        items,
        extra_covariates: extra,
        outcome_prob: prob,
        outcome,
    })
}
