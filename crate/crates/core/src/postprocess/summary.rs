//! Posterior medians, equal-tailed 95% intervals, and outcome probabilities.

use serde::{Deserialize, Serialize};

use crate::dist::norm_cdf;
use crate::error::{Error, Result};
use crate::model::{ModelParams, ThetaArray};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn covers(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn from_samples(values: &mut [f64]) -> Self {
        values.sort_by(|a, b| a.total_cmp(b));
        Interval {
            median: quantile_sorted(values, 0.5),
            lower: quantile_sorted(values, 0.025),
            upper: quantile_sorted(values, 0.975),
        }
    }
}

/// Linear-interpolation quantile of sorted data (R type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub k: usize,
    pub q: usize,
    pub levels: Vec<usize>,
    pub n_draws: usize,
    /// Element-wise medians renormalized to the simplex, with raw quantiles.
    pub pi: Vec<Interval>,
    pub pi_raw_median: Vec<f64>,
    /// Same flat layout as [`ThetaArray::data`].
    pub theta: Vec<Interval>,
    /// Row-major `K x q`.
    pub xi: Vec<Interval>,
    /// Posterior probability that each coefficient is positive.
    pub xi_prob_positive: Vec<f64>,
}

impl ChainSummary {
    /// Median item probabilities arranged as a theta array.
    pub fn theta_median(&self) -> ThetaArray {
        let mut t = ThetaArray::uniform(&self.levels, self.k);
        for (dst, iv) in t.data.iter_mut().zip(&self.theta) {
            *dst = iv.median;
        }
        t
    }

    /// 0-based modal level, indexed `[item][class]`.
    pub fn modal_levels(&self) -> Vec<Vec<usize>> {
        self.theta_median().modal_levels()
    }
}

fn summarize_column(draws: &[ModelParams], f: impl Fn(&ModelParams) -> f64) -> Interval {
    let mut v: Vec<f64> = draws.iter().map(f).collect();
    Interval::from_samples(&mut v)
}

pub fn summarize(draws: &[ModelParams]) -> Result<ChainSummary> {
    let first = draws.first().ok_or_else(|| Error::invalid("cannot summarize an empty chain"))?;
    let k = first.k();
    let q = first.q;
    let raw_pi: Vec<Interval> = (0..k).map(|kk| summarize_column(draws, |p| p.pi[kk])).collect();
    let pi_raw_median: Vec<f64> = raw_pi.iter().map(|iv| iv.median).collect();
    let total: f64 = pi_raw_median.iter().sum();
    let pi = raw_pi
        .iter()
        .map(|iv| Interval { median: iv.median / total, ..*iv })
        .collect();
    let theta = (0..first.theta.data.len())
        .map(|idx| summarize_column(draws, |p| p.theta.data[idx]))
        .collect();
    let xi = (0..k * q).map(|idx| summarize_column(draws, |p| p.xi[idx])).collect();
    let m = draws.len() as f64;
    let xi_prob_positive = (0..k * q)
        .map(|idx| draws.iter().filter(|p| p.xi[idx] > 0.0).count() as f64 / m)
        .collect();
    Ok(ChainSummary {
        k,
        q,
        levels: first.theta.levels.clone(),
        n_draws: draws.len(),
        pi,
        pi_raw_median,
        theta,
        xi,
        xi_prob_positive,
    })
}

/// Posterior of `Phi(x' xi_class)` for a class block `x = (1, v...)`.
pub fn outcome_probability(draws: &[ModelParams], class: usize, block: &[f64]) -> Result<Interval> {
    let first = draws.first().ok_or_else(|| Error::invalid("cannot summarize an empty chain"))?;
    if class >= first.k() {
        return Err(Error::invalid(format!("class {} out of range for K={}", class + 1, first.k())));
    }
    if block.len() != first.q {
        return Err(Error::invalid(format!(
            "covariate block has {} entries, model uses {}",
            block.len(),
            first.q
        )));
    }
    let mut v: Vec<f64> = draws
        .iter()
        .map(|p| norm_cdf(crate::gibbs::dot(block, p.xi_row(class))))
        .collect();
    Ok(Interval::from_samples(&mut v))
}
