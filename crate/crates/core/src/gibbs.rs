//! Two-stage Gibbs sampler for the supervised (probit outcome) and unsupervised
//! latent class models, with normalized survey weights as likelihood exponents.
//!
//! Setting every normalized weight to one gives the unweighted model; dropping
//! the outcome gives the unsupervised model used by the two-step comparator.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::dist::{
    categorical_unnormalized, cholesky_with_ridge, draw_dirichlet, draw_dirichlet_into,
    draw_permutation, draw_truncnormal, std_normal,
};
use crate::error::{Error, Result};
use crate::model::{CodingSpec, McmcConfig, ModelParams, NormalizedWeights, PriorSpec, ThetaArray};

const MAX_XI_RIDGE: f64 = 1e-4;

/// Sampler-ready view of a dataset: 0-based item levels, per-individual class
/// block `(1, v)`, and normalized weights.
#[derive(Clone, Debug)]
pub struct SamplerData {
    pub n: usize,
    pub n_items: usize,
    pub levels: Vec<usize>,
    /// Start of item `j` within the stacked level axis.
    pub level_offsets: Vec<usize>,
    pub total_levels: usize,
    pub items: Vec<u8>,
    pub y: Vec<u8>,
    pub q: usize,
    pub xblock: Vec<f64>,
    pub weights: NormalizedWeights,
    pub supervised: bool,
}

impl SamplerData {
    pub fn new(
        ds: &SurveyDataset,
        coding: &CodingSpec,
        weights: NormalizedWeights,
        supervised: bool,
    ) -> Result<Self> {
        ds.ensure_valid()?;
        coding.validate()?;
        if coding.n_covariates != ds.n_covariates {
            return Err(Error::invalid("coding covariate count differs from dataset"));
        }
        if weights.wtilde.len() != ds.n {
            return Err(Error::invalid("weight vector length differs from dataset"));
        }
        if ds.item_levels.iter().any(|&r| r > u8::MAX as usize) {
            return Err(Error::invalid("at most 255 levels per item are supported"));
        }
        let mut level_offsets = Vec::with_capacity(ds.n_items);
        let mut total = 0;
        for &r in &ds.item_levels {
            level_offsets.push(total);
            total += r;
        }
        let items = ds.items.iter().map(|&x| (x - 1) as u8).collect();
        let q = if supervised { coding.block_width() } else { 0 };
        let mut xblock = Vec::with_capacity(ds.n * q);
        if supervised {
            for i in 0..ds.n {
                coding.block_into(ds.covariate_row(i), &mut xblock);
            }
        }
        Ok(SamplerData {
            n: ds.n,
            n_items: ds.n_items,
            levels: ds.item_levels.clone(),
            level_offsets,
            total_levels: total,
            items,
            y: ds.outcome.clone(),
            q,
            xblock,
            weights,
            supervised,
        })
    }

    #[inline]
    pub fn item(&self, i: usize, j: usize) -> usize {
        self.items[i * self.n_items + j] as usize
    }

    #[inline]
    pub fn x(&self, i: usize) -> &[f64] {
        &self.xblock[i * self.q..(i + 1) * self.q]
    }

    #[inline]
    pub fn wtilde(&self) -> &[f64] {
        &self.weights.wtilde
    }

    pub fn max_levels(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub params: ModelParams,
    /// 0-based class assignments.
    pub c: Vec<usize>,
    pub z: Vec<f64>,
    pub iter: usize,
}

impl GibbsState {
    /// Draws every parameter from its prior, then classes and latent probit
    /// variables from their conditionals.
    pub fn from_prior<R: Rng + ?Sized>(
        data: &SamplerData,
        prior: &PriorSpec,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_prior(data, prior, k)?;
        let pi = draw_dirichlet(&prior.alpha, rng)?;
        let mut theta = ThetaArray::uniform(&data.levels, k);
        for j in 0..data.n_items {
            let r = data.levels[j];
            for kk in 0..k {
                draw_dirichlet_into(&prior.eta[..r], rng, theta.simplex_mut(j, kk))?;
            }
        }
        let q = data.q;
        let xi = (0..k * q)
            .map(|idx| {
                let p = idx % q;
                prior.mu0[p] + prior.sigma0_diag[p].sqrt() * std_normal(rng)
            })
            .collect();
        let params = ModelParams { pi, theta, q, xi };
        let c = (0..data.n)
            .map(|_| categorical_unnormalized(&params.pi, 1.0, rng))
            .collect();
        let mut state = GibbsState { params, c, z: vec![0.0; data.n], iter: 0 };
        if data.supervised {
            state.z = update_z(&state, data, rng)?;
        }
        Ok(state)
    }
}

fn check_prior(data: &SamplerData, prior: &PriorSpec, k: usize) -> Result<()> {
    prior.validate()?;
    if prior.alpha.len() != k {
        return Err(Error::invalid(format!("alpha has {} entries, K={k}", prior.alpha.len())));
    }
    if prior.eta.len() < data.max_levels() {
        return Err(Error::invalid("eta shorter than the largest item level count"));
    }
    if data.supervised && prior.mu0.len() != data.q {
        return Err(Error::invalid(format!(
            "probit prior has {} entries, coding block has {}",
            prior.mu0.len(),
            data.q
        )));
    }
    Ok(())
}

/// Dirichlet parameters of the class-share conditional: `alpha_k + sum_{c_i = k} wtilde_i`.
pub fn pi_conditional(c: &[usize], wtilde: &[f64], alpha: &[f64]) -> Vec<f64> {
    let mut a = alpha.to_vec();
    for (&ci, &w) in c.iter().zip(wtilde) {
        a[ci] += w;
    }
    a
}

pub fn update_pi<R: Rng + ?Sized>(
    state: &GibbsState,
    wtilde: &[f64],
    alpha: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    draw_dirichlet(&pi_conditional(&state.c, wtilde, alpha), rng)
}

/// Dirichlet parameters of every item-by-class conditional, laid out like
/// [`ThetaArray`]: `eta_r + sum_i I(x_ij = r) I(c_i = k) wtilde_i`.
pub fn theta_conditional(c: &[usize], data: &SamplerData, eta: &[f64], k: usize) -> ThetaArray {
    let mut post = ThetaArray::new(&data.levels, k, |_, _, r| eta[r]);
    let w = data.wtilde();
    for i in 0..data.n {
        let ci = c[i];
        for j in 0..data.n_items {
            post.simplex_mut(j, ci)[data.item(i, j)] += w[i];
        }
    }
    post
}

pub fn update_theta<R: Rng + ?Sized>(
    state: &GibbsState,
    data: &SamplerData,
    eta: &[f64],
    rng: &mut R,
) -> Result<ThetaArray> {
    let k = state.params.k();
    let post = theta_conditional(&state.c, data, eta, k);
    let mut theta = post.clone();
    for j in 0..data.n_items {
        for kk in 0..k {
            draw_dirichlet_into(post.simplex(j, kk), rng, theta.simplex_mut(j, kk))?;
        }
    }
    Ok(theta)
}

/// Gaussian conditional of one class block:
/// precision `Sigma0^-1 + V' C_k W V`, shift `Sigma0^-1 mu0 + V' C_k W z`.
/// Returns `(mean, covariance)`.
pub fn xi_conditional(
    state: &GibbsState,
    data: &SamplerData,
    prior: &PriorSpec,
    class: usize,
    ridge: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let q = data.q;
    let mut prec = DMatrix::<f64>::zeros(q, q);
    let mut shift = DVector::<f64>::zeros(q);
    for p in 0..q {
        prec[(p, p)] = 1.0 / prior.sigma0_diag[p];
        shift[p] = prior.mu0[p] / prior.sigma0_diag[p];
    }
    let w = data.wtilde();
    for i in 0..data.n {
        if state.c[i] != class {
            continue;
        }
        let x = data.x(i);
        for a in 0..q {
            shift[a] += w[i] * x[a] * state.z[i];
            for b in 0..=a {
                prec[(a, b)] += w[i] * x[a] * x[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            prec[(b, a)] = prec[(a, b)];
        }
    }
    let (l, _) = cholesky_with_ridge(&prec, ridge, MAX_XI_RIDGE).ok_or_else(|| {
        Error::numerical(format!("probit conditional precision for class {} is singular", class + 1))
    })?;
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(q, q))
        .ok_or_else(|| Error::numerical(format!("probit conditional for class {} failed", class + 1)))?;
    let cov = linv.transpose() * &linv;
    let mean = &cov * shift;
    Ok((mean, cov))
}

pub fn update_xi<R: Rng + ?Sized>(
    state: &GibbsState,
    data: &SamplerData,
    prior: &PriorSpec,
    ridge: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let k = state.params.k();
    let q = data.q;
    let mut xi = vec![0.0; k * q];
    for class in 0..k {
        let (mean, cov) = xi_conditional(state, data, prior, class, ridge)?;
        let draw = crate::dist::draw_mvnormal(&mean, &cov, ridge, rng).map_err(|_| {
            Error::numerical(format!("probit conditional for class {} is not positive definite", class + 1))
        })?;
        xi[class * q..(class + 1) * q].copy_from_slice(draw.as_slice());
    }
    Ok(xi)
}

/// Class-major table of log item probabilities, `[(offset_j + r) * K + k]`, so
/// the per-individual accumulation runs over contiguous class entries.
fn log_theta_table(theta: &ThetaArray, data: &SamplerData) -> Vec<f64> {
    let k = theta.k;
    let mut out = vec![0.0; data.total_levels * k];
    for j in 0..data.n_items {
        for kk in 0..k {
            for (r, p) in theta.simplex(j, kk).iter().enumerate() {
                out[(data.level_offsets[j] + r) * k + kk] = p.ln();
            }
        }
    }
    out
}

/// Unnormalized log allocation probabilities of individual `i` for every class:
/// `log pi_k + sum_j log theta_{j k x_ij}` plus, when supervised, the Gaussian
/// kernel of `z_i` around the class-block linear predictor.
pub fn allocation_log_weights(state: &GibbsState, data: &SamplerData, i: usize) -> Vec<f64> {
    let table = log_theta_table(&state.params.theta, data);
    let mut acc = vec![0.0; state.params.k()];
    allocation_into(state, data, &table, i, &mut acc);
    acc
}

#[inline]
fn allocation_into(state: &GibbsState, data: &SamplerData, table: &[f64], i: usize, acc: &mut [f64]) {
    let k = acc.len();
    for (a, p) in acc.iter_mut().zip(&state.params.pi) {
        *a = p.ln();
    }
    let row = &data.items[i * data.n_items..(i + 1) * data.n_items];
    for (j, &x) in row.iter().enumerate() {
        let base = (data.level_offsets[j] + x as usize) * k;
        for (a, t) in acc.iter_mut().zip(&table[base..base + k]) {
            *a += t;
        }
    }
    if data.supervised {
        let x = data.x(i);
        let z = state.z[i];
        for (kk, a) in acc.iter_mut().enumerate() {
            let r = z - dot(x, state.params.xi_row(kk));
            *a -= 0.5 * r * r;
        }
    }
}

pub fn update_c<R: Rng + ?Sized>(state: &GibbsState, data: &SamplerData, rng: &mut R) -> Result<Vec<usize>> {
    let k = state.params.k();
    let table = log_theta_table(&state.params.theta, data);
    let mut acc = vec![0.0; k];
    let mut c = Vec::with_capacity(data.n);
    for i in 0..data.n {
        allocation_into(state, data, &table, i, &mut acc);
        let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::numerical(format!(
                "all class log-probabilities are -inf for individual {}",
                i + 1
            )));
        }
        let mut total = 0.0;
        for a in acc.iter_mut() {
            *a = (*a - max).exp();
            total += *a;
        }
        c.push(categorical_unnormalized(&acc, total, rng));
    }
    Ok(c)
}

pub fn update_z<R: Rng + ?Sized>(state: &GibbsState, data: &SamplerData, rng: &mut R) -> Result<Vec<f64>> {
    (0..data.n)
        .map(|i| {
            let mean = dot(data.x(i), state.params.xi_row(state.c[i]));
            if data.y[i] == 1 {
                draw_truncnormal(mean, 0.0, f64::INFINITY, rng)
            } else {
                draw_truncnormal(mean, f64::NEG_INFINITY, 0.0, rng)
            }
        })
        .collect()
}

/// Applies `perm` (class `k` becomes `perm[k]`) to every class-indexed quantity.
pub fn apply_permutation(state: &GibbsState, perm: &[usize]) -> GibbsState {
    GibbsState {
        params: state.params.permuted(perm),
        c: state.c.iter().map(|&ci| perm[ci]).collect(),
        z: state.z.clone(),
        iter: state.iter,
    }
}

/// Random permutation step of the sampler.
pub fn permute_labels<R: Rng + ?Sized>(state: &GibbsState, rng: &mut R) -> GibbsState {
    let perm = draw_permutation(state.params.k(), rng);
    apply_permutation(state, &perm)
}

/// Complete-data log pseudo-posterior (up to a constant): log prior plus
/// `sum_i wtilde_i log p(x_i, z_i, c_i | params)`.
pub fn log_pseudo_posterior(state: &GibbsState, data: &SamplerData, prior: &PriorSpec) -> f64 {
    let p = &state.params;
    let k = p.k();
    let mut lp = 0.0;
    for (a, pi) in prior.alpha.iter().zip(&p.pi) {
        lp += (a - 1.0) * pi.ln();
    }
    for j in 0..data.n_items {
        for kk in 0..k {
            for (r, t) in p.theta.simplex(j, kk).iter().enumerate() {
                lp += (prior.eta[r] - 1.0) * t.ln();
            }
        }
    }
    for kk in 0..k {
        for (pp, x) in p.xi_row(kk).iter().enumerate() {
            let d = x - prior.mu0[pp];
            lp -= 0.5 * d * d / prior.sigma0_diag[pp];
        }
    }
    let w = data.wtilde();
    for i in 0..data.n {
        let ci = state.c[i];
        let mut li = p.pi[ci].ln();
        for j in 0..data.n_items {
            li += p.theta.get(j, ci, data.item(i, j)).ln();
        }
        if data.supervised {
            let r = state.z[i] - dot(data.x(i), p.xi_row(ci));
            li -= 0.5 * r * r;
            let consistent = (state.z[i] > 0.0) == (data.y[i] == 1);
            if !consistent {
                return f64::NEG_INFINITY;
            }
        }
        lp += w[i] * li;
    }
    lp
}

/// One full sweep: pi, theta, xi, c, z, then a random relabeling.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    data: &SamplerData,
    prior: &PriorSpec,
    ridge: f64,
    rng: &mut R,
) -> Result<()> {
    state.params.pi = update_pi(state, data.wtilde(), &prior.alpha, rng)?;
    state.params.theta = update_theta(state, data, &prior.eta, rng)?;
    if data.supervised {
        state.params.xi = update_xi(state, data, prior, ridge, rng)?;
    }
    state.c = update_c(state, data, rng)?;
    if data.supervised {
        state.z = update_z(state, data, rng)?;
    }
    *state = permute_labels(state, rng);
    state.iter += 1;
    Ok(())
}

/// Prior resized for `k` classes; a user-supplied alpha of the right length is kept.
pub(crate) fn prior_for(prior: &PriorSpec, k: usize) -> PriorSpec {
    if prior.alpha.len() == k {
        prior.clone()
    } else {
        prior.with_k(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOutcome {
    pub k_hat: usize,
    /// Number of classes with share above the cutoff, per kept iteration.
    pub occupied: Vec<usize>,
}

/// Overfitted run at `K = k_max` whose kept iterations vote on the number of
/// nonempty classes.
pub fn run_adaptive<R: Rng + ?Sized>(
    data: &SamplerData,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<AdaptiveOutcome> {
    config.validate()?;
    let prior = prior_for(prior, config.k_max);
    let mut state = GibbsState::from_prior(data, &prior, config.k_max, rng)?;
    let mut occupied = Vec::with_capacity(config.n_kept());
    for it in 0..config.n_iter {
        gibbs_sweep(&mut state, data, &prior, config.ridge, rng)?;
        if config.keeps(it) {
            occupied.push(state.params.pi.iter().filter(|&&p| p > config.class_cutoff).count());
        }
    }
    Ok(AdaptiveOutcome { k_hat: median_count(&occupied), occupied })
}

/// Median of the counts, rounded half up, at least one.
pub(crate) fn median_count(counts: &[usize]) -> usize {
    if counts.is_empty() {
        return 1;
    }
    let mut s = counts.to_vec();
    s.sort_unstable();
    let m = s.len();
    let med = if m % 2 == 1 {
        s[m / 2] as f64
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2]) as f64
    };
    (med.round() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    pub config: McmcConfig,
    pub supervised: bool,
    pub weighted: bool,
    pub n: usize,
    pub elapsed_secs: f64,
}

/// Kept draws of a fixed-K run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub k: usize,
    pub q: usize,
    pub levels: Vec<usize>,
    pub draws: Vec<ModelParams>,
    /// 0-based class assignments per kept draw.
    pub c_draws: Vec<Vec<u16>>,
    pub accepted_k: usize,
    pub meta: ChainMeta,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }
}

pub fn run_fixed<R: Rng + ?Sized>(
    data: &SamplerData,
    prior: &PriorSpec,
    config: &McmcConfig,
    k: usize,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate()?;
    if k == 0 || k > u16::MAX as usize {
        return Err(Error::invalid(format!("cannot run a chain with K={k}")));
    }
    let start = Instant::now();
    let prior = prior_for(prior, k);
    let mut state = GibbsState::from_prior(data, &prior, k, rng)?;
    let mut draws = Vec::with_capacity(config.n_kept());
    let mut c_draws = Vec::with_capacity(config.n_kept());
    for it in 0..config.n_iter {
        gibbs_sweep(&mut state, data, &prior, config.ridge, rng)?;
        if config.keeps(it) {
            draws.push(state.params.clone());
            c_draws.push(state.c.iter().map(|&c| c as u16).collect());
        }
    }
    let weighted = data.wtilde().iter().any(|&w| w != 1.0);
    Ok(ChainOutput {
        k,
        q: data.q,
        levels: data.levels.clone(),
        draws,
        c_draws,
        accepted_k: k,
        meta: ChainMeta {
            config: config.clone(),
            supervised: data.supervised,
            weighted,
            n: data.n,
            elapsed_secs: start.elapsed().as_secs_f64(),
        },
    })
}

/// Adaptive stage followed by the fixed stage at the selected K.
pub fn run_two_stage<R: Rng + ?Sized>(
    data: &SamplerData,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<(AdaptiveOutcome, ChainOutput)> {
    let adaptive = run_adaptive(data, prior, config, rng)?;
    let chain = run_fixed(data, prior, config, adaptive.k_hat, rng)?;
    Ok((adaptive, chain))
}
