//! Parameter containers, priors, sampler configuration, weight normalization and
//! the mixture reference design coding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

/// Survey weights rescaled by `kappa = mean(w)` so they sum to `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedWeights {
    pub kappa: f64,
    pub wtilde: Vec<f64>,
}

pub fn normalize_weights(weight: &[f64]) -> Result<NormalizedWeights> {
    if weight.is_empty() {
        return Err(Error::invalid("no weights to normalize"));
    }
    if let Some((i, w)) = weight
        .iter()
        .enumerate()
        .find(|(_, w)| !(w.is_finite() && **w > 0.0))
    {
        return Err(Error::invalid(format!("weight {w} at position {i} is not positive and finite")));
    }
    let kappa = weight.iter().sum::<f64>() / weight.len() as f64;
    Ok(NormalizedWeights { kappa, wtilde: weight.iter().map(|w| w / kappa).collect() })
}

impl NormalizedWeights {
    /// Unit weights, i.e. the unweighted model.
    pub fn unit(n: usize) -> Self {
        NormalizedWeights { kappa: 1.0, wtilde: vec![1.0; n] }
    }
}

/// Mixture reference coding: every class owns an intercept plus one slope per
/// interacting covariate. A full design row has `k` such blocks, only one of
/// which is nonzero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingSpec {
    pub k: usize,
    pub n_covariates: usize,
    /// Covariate columns entering each class block, in order.
    pub interacting: Vec<usize>,
}

impl CodingSpec {
    /// Every covariate interacts with class.
    pub fn full(k: usize, n_covariates: usize) -> Self {
        CodingSpec { k, n_covariates, interacting: (0..n_covariates).collect() }
    }

    /// Intercept-only per class.
    pub fn intercept_only(k: usize, n_covariates: usize) -> Self {
        CodingSpec { k, n_covariates, interacting: Vec::new() }
    }

    pub fn with_k(&self, k: usize) -> Self {
        CodingSpec { k, ..self.clone() }
    }

    /// Columns per class block.
    pub fn block_width(&self) -> usize {
        1 + self.interacting.len()
    }

    pub fn row_width(&self) -> usize {
        self.k * self.block_width()
    }

    /// The `(1, v...)` block for one individual's covariates.
    pub fn block(&self, covariates: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.block_width());
        self.block_into(covariates, &mut out);
        out
    }

    pub(crate) fn block_into(&self, covariates: &[f64], out: &mut Vec<f64>) {
        out.push(1.0);
        out.extend(self.interacting.iter().map(|&c| covariates[c]));
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("coding needs at least one class"));
        }
        if let Some(&c) = self.interacting.iter().find(|&&c| c >= self.n_covariates) {
            return Err(Error::invalid(format!(
                "interacting column {c} out of range for {} covariates",
                self.n_covariates
            )));
        }
        Ok(())
    }
}

/// Full mixture-reference design row for an individual in `class` (0-based).
pub fn build_design_row(class: usize, covariates: &[f64], coding: &CodingSpec) -> Result<Vec<f64>> {
    if class >= coding.k {
        return Err(Error::invalid(format!("class {class} out of range for K={}", coding.k)));
    }
    if covariates.len() != coding.n_covariates {
        return Err(Error::invalid(format!(
            "expected {} covariates, got {}",
            coding.n_covariates,
            covariates.len()
        )));
    }
    let q = coding.block_width();
    let mut row = vec![0.0; coding.row_width()];
    let block = coding.block(covariates);
    row[class * q..(class + 1) * q].copy_from_slice(&block);
    Ok(row)
}

/// Item-response probabilities `theta[j][k][r]` stored flat. Item `j` occupies
/// `k * levels[j]` consecutive entries, one simplex per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaArray {
    pub levels: Vec<usize>,
    pub k: usize,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

impl ThetaArray {
    pub fn new(levels: &[usize], k: usize, fill: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut offsets = Vec::with_capacity(levels.len());
        let mut data = Vec::new();
        for (j, &r) in levels.iter().enumerate() {
            offsets.push(data.len());
            for kk in 0..k {
                for rr in 0..r {
                    data.push(fill(j, kk, rr));
                }
            }
        }
        ThetaArray { levels: levels.to_vec(), k, offsets, data }
    }

    pub fn uniform(levels: &[usize], k: usize) -> Self {
        Self::new(levels, k, |j, _, _| 1.0 / levels[j] as f64)
    }

    pub fn n_items(&self) -> usize {
        self.levels.len()
    }

    /// Position of `(j, k, r)` in `data`.
    #[inline]
    pub fn index(&self, j: usize, k: usize, r: usize) -> usize {
        self.offsets[j] + k * self.levels[j] + r
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize, r: usize) -> f64 {
        self.data[self.index(j, k, r)]
    }

    #[inline]
    pub fn simplex(&self, j: usize, k: usize) -> &[f64] {
        let r = self.levels[j];
        let start = self.offsets[j] + k * r;
        &self.data[start..start + r]
    }

    #[inline]
    pub fn simplex_mut(&mut self, j: usize, k: usize) -> &mut [f64] {
        let r = self.levels[j];
        let start = self.offsets[j] + k * r;
        &mut self.data[start..start + r]
    }

    /// Reorders the class axis: class `k` of `self` moves to `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for j in 0..self.n_items() {
            for k in 0..self.k {
                out.simplex_mut(j, perm[k]).copy_from_slice(self.simplex(j, k));
            }
        }
        out
    }

    /// Modal level (0-based) of each (item, class).
    pub fn modal_levels(&self) -> Vec<Vec<usize>> {
        (0..self.n_items())
            .map(|j| {
                (0..self.k)
                    .map(|k| argmax(self.simplex(j, k)))
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// pi (K-simplex), theta (J x K simplexes), xi (K x q, row-major).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub pi: Vec<f64>,
    pub theta: ThetaArray,
    pub q: usize,
    pub xi: Vec<f64>,
}

impl ModelParams {
    pub fn k(&self) -> usize {
        self.pi.len()
    }

    #[inline]
    pub fn xi_row(&self, k: usize) -> &[f64] {
        &self.xi[k * self.q..(k + 1) * self.q]
    }

    #[inline]
    pub fn xi_row_mut(&mut self, k: usize) -> &mut [f64] {
        let q = self.q;
        &mut self.xi[k * q..(k + 1) * q]
    }

    /// Applies a relabeling: class `k` becomes class `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let k = self.k();
        let mut pi = vec![0.0; k];
        let mut xi = vec![0.0; self.xi.len()];
        for (from, &to) in perm.iter().enumerate() {
            pi[to] = self.pi[from];
            xi[to * self.q..(to + 1) * self.q].copy_from_slice(self.xi_row(from));
        }
        ModelParams { pi, theta: self.theta.permuted(perm), q: self.q, xi }
    }

    pub fn check(&self) -> Result<()> {
        check_simplex(&self.pi, "pi")?;
        if self.theta.k != self.k() {
            return Err(Error::invalid("theta class count differs from pi"));
        }
        for j in 0..self.theta.n_items() {
            for k in 0..self.k() {
                check_simplex(self.theta.simplex(j, k), "theta")?;
            }
        }
        if self.xi.len() != self.k() * self.q {
            return Err(Error::invalid("xi has wrong dimensions"));
        }
        Ok(())
    }
}

pub fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("{what} is not a simplex: {p:?}")));
    }
    Ok(())
}

/// Hyperparameters. The probit prior is `N(mu0, diag(sigma0_diag))` per class block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub alpha: Vec<f64>,
    /// Item-level Dirichlet concentration; item `j` uses the first `R_j` entries.
    pub eta: Vec<f64>,
    pub mu0: Vec<f64>,
    pub sigma0_diag: Vec<f64>,
}

impl PriorSpec {
    /// Sparse Dirichlet `alpha = 1/K`, flat item prior, `N(0, 4)` probit prior.
    pub fn default_for(k: usize, max_levels: usize, q: usize) -> Self {
        PriorSpec {
            alpha: vec![1.0 / k as f64; k],
            eta: vec![1.0; max_levels],
            mu0: vec![0.0; q],
            sigma0_diag: vec![4.0; q],
        }
    }

    /// Same prior resized to `k` classes with `alpha = 1/k`.
    pub fn with_k(&self, k: usize) -> Self {
        PriorSpec { alpha: vec![1.0 / k as f64; k], ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let all_pos = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x > 0.0);
        if !all_pos(&self.alpha) || !all_pos(&self.eta) || !all_pos(&self.sigma0_diag) {
            return Err(Error::invalid("prior hyperparameters must be positive"));
        }
        if self.mu0.len() != self.sigma0_diag.len() || self.mu0.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("mu0 and sigma0_diag must have equal length"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    pub k_max: usize,
    pub class_cutoff: f64,
    pub adjust_variance: bool,
    pub n_boot_reps: usize,
    pub fd_step: f64,
    pub ridge: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 20_000,
            n_burn: 10_000,
            thin: 5,
            seed: 1,
            k_max: 30,
            class_cutoff: 0.05,
            adjust_variance: true,
            n_boot_reps: 100,
            fd_step: 1e-5,
            ridge: 1e-8,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::invalid("n_burn must be smaller than n_iter"));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thin must be at least 1"));
        }
        if self.k_max < 2 {
            return Err(Error::invalid("k_max must be at least 2"));
        }
        if !(self.fd_step > 0.0 && self.ridge >= 0.0) {
            return Err(Error::invalid("fd_step must be positive and ridge nonnegative"));
        }
        Ok(())
    }

    pub fn n_kept(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    /// Iteration `it` (0-based) is stored when it is past burn-in and on the
    /// thinning grid.
    #[inline]
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.n_burn && (it - self.n_burn + 1) % self.thin == 0
    }
}
