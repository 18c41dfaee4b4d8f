//! Sandwich rescaling of pseudo-posterior draws.
//!
//! Draws are mapped to unconstrained coordinates, centered at their mean, and
//! multiplied by `R2^-1 R1`, where `R2' R2` is the draws' sample covariance and
//! `R1' R1 = H^-1 J H^-1`. `H` is the negative Hessian of the observed-data log
//! pseudo-posterior (classes and latent probit variables integrated out) and `J`
//! is the design-based covariance of its score, estimated by a rescaled
//! cluster bootstrap within strata.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SurveyDataset;
use crate::design::ClusterDesign;
use crate::dist::{cholesky_with_ridge, log_norm_cdf, log_norm_pdf};
use crate::error::{Error, Result};
use crate::gibbs::{dot, prior_for, ChainOutput, SamplerData};
use crate::model::{normalize_weights, CodingSpec, McmcConfig, ModelParams, PriorSpec};

use super::transform::{from_unconstrained, to_unconstrained, UnconstrainedLayout};

pub const MAX_RIDGE: f64 = 1e-4;

/// Observed-data log pseudo-posterior in unconstrained coordinates. The prior
/// includes the Jacobian of the log-ratio maps, so Dirichlet(a) contributes
/// `sum_k a_k log p_k`.
pub struct ObservedPseudoPosterior<'a> {
    data: &'a SamplerData,
    prior: PriorSpec,
    layout: UnconstrainedLayout,
    /// Start of each (item, class) block within the theta coordinates.
    theta_offsets: Vec<usize>,
}

impl<'a> ObservedPseudoPosterior<'a> {
    pub fn new(data: &'a SamplerData, prior: &PriorSpec, layout: UnconstrainedLayout) -> Result<Self> {
        if layout.levels != data.levels || layout.q != data.q {
            return Err(Error::invalid("parameter layout does not match the data"));
        }
        let prior = prior_for(prior, layout.k);
        if prior.eta.len() < data.max_levels() || (data.supervised && prior.mu0.len() != data.q) {
            return Err(Error::invalid("prior does not match the data"));
        }
        let mut theta_offsets = Vec::with_capacity(layout.levels.len() * layout.k);
        let mut pos = layout.theta_start();
        for &r in &layout.levels {
            for _ in 0..layout.k {
                theta_offsets.push(pos);
                pos += r - 1;
            }
        }
        Ok(ObservedPseudoPosterior { data, prior, layout, theta_offsets })
    }

    pub fn layout(&self) -> &UnconstrainedLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// `log pi_k + sum_j log theta + log p(y | xi_k)` for every class of individual `i`.
    fn class_terms(&self, p: &ModelParams, log_theta: &[f64], i: usize, out: &mut [f64]) {
        let d = self.data;
        let k = p.k();
        for (kk, o) in out.iter_mut().enumerate() {
            let mut s = p.pi[kk].ln();
            for j in 0..d.n_items {
                s += log_theta[(d.level_offsets[j] + d.item(i, j)) * k + kk];
            }
            if d.supervised {
                let eta = dot(d.x(i), p.xi_row(kk));
                s += if d.y[i] == 1 { log_norm_cdf(eta) } else { log_norm_cdf(-eta) };
            }
            *o = s;
        }
    }

    fn log_theta(&self, p: &ModelParams) -> Vec<f64> {
        let d = self.data;
        let k = p.k();
        let mut t = vec![0.0; d.total_levels * k];
        for j in 0..d.n_items {
            for kk in 0..k {
                for (r, v) in p.theta.simplex(j, kk).iter().enumerate() {
                    t[(d.level_offsets[j] + r) * k + kk] = v.ln();
                }
            }
        }
        t
    }

    /// Unweighted per-individual log-likelihood contributions.
    pub fn individual_loglik(&self, u: &[f64]) -> Vec<f64> {
        let p = from_unconstrained(u, &self.layout);
        let lt = self.log_theta(&p);
        let mut terms = vec![0.0; p.k()];
        (0..self.data.n)
            .map(|i| {
                self.class_terms(&p, &lt, i, &mut terms);
                log_sum_exp(&terms)
            })
            .collect()
    }

    pub fn log_prior(&self, u: &[f64]) -> f64 {
        let p = from_unconstrained(u, &self.layout);
        let mut lp: f64 = self.prior.alpha.iter().zip(&p.pi).map(|(a, x)| a * x.ln()).sum();
        for j in 0..p.theta.n_items() {
            for kk in 0..p.k() {
                for (r, t) in p.theta.simplex(j, kk).iter().enumerate() {
                    lp += self.prior.eta[r] * t.ln();
                }
            }
        }
        for kk in 0..p.k() {
            for (pp, x) in p.xi_row(kk).iter().enumerate() {
                let dlt = x - self.prior.mu0[pp];
                lp -= 0.5 * dlt * dlt / self.prior.sigma0_diag[pp];
            }
        }
        lp
    }

    pub fn log_posterior(&self, u: &[f64]) -> f64 {
        let ll = self.individual_loglik(u);
        let w = self.data.wtilde();
        ll.iter().zip(w).map(|(l, w)| w * l).sum::<f64>() + self.log_prior(u)
    }

    /// Analytic gradient of [`Self::log_posterior`].
    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let d = self.data;
        let lay = &self.layout;
        let p = from_unconstrained(u, lay);
        let k = p.k();
        let q = lay.q;
        let lt = self.log_theta(&p);
        let w = d.wtilde();
        let mut g = vec![0.0; lay.dim()];
        // Weighted responsibilities per class and per (level, class).
        let mut class_mass = vec![0.0; k];
        let mut level_mass = vec![0.0; d.total_levels * k];
        let mut terms = vec![0.0; k];
        for i in 0..d.n {
            self.class_terms(&p, &lt, i, &mut terms);
            let lse = log_sum_exp(&terms);
            for kk in 0..k {
                let gamma = (terms[kk] - lse).exp() * w[i];
                class_mass[kk] += gamma;
                for j in 0..d.n_items {
                    level_mass[(d.level_offsets[j] + d.item(i, j)) * k + kk] += gamma;
                }
                if d.supervised {
                    let x = d.x(i);
                    let eta = dot(x, p.xi_row(kk));
                    let mills = if d.y[i] == 1 {
                        (log_norm_pdf(eta) - log_norm_cdf(eta)).exp()
                    } else {
                        -(log_norm_pdf(eta) - log_norm_cdf(-eta)).exp()
                    };
                    let dst = &mut g[lay.xi_start() + kk * q..lay.xi_start() + (kk + 1) * q];
                    for (o, xv) in dst.iter_mut().zip(x) {
                        *o += gamma * mills * xv;
                    }
                }
            }
        }
        let total_w: f64 = class_mass.iter().sum();
        let alpha_sum: f64 = self.prior.alpha.iter().sum();
        for m in 0..k - 1 {
            g[m] = class_mass[m] - total_w * p.pi[m] + self.prior.alpha[m] - alpha_sum * p.pi[m];
        }
        for (j, &r_j) in lay.levels.iter().enumerate() {
            let eta_sum: f64 = self.prior.eta[..r_j].iter().sum();
            for kk in 0..k {
                let start = self.theta_offsets[j * k + kk];
                let theta = p.theta.simplex(j, kk);
                for r in 0..r_j - 1 {
                    let counts = level_mass[(d.level_offsets[j] + r) * k + kk];
                    g[start + r] = counts - class_mass[kk] * theta[r] + self.prior.eta[r]
                        - eta_sum * theta[r];
                }
            }
        }
        if d.supervised {
            for kk in 0..k {
                for pp in 0..q {
                    let x = p.xi[kk * q + pp];
                    g[lay.xi_start() + kk * q + pp] -=
                        (x - self.prior.mu0[pp]) / self.prior.sigma0_diag[pp];
                }
            }
        }
        g
    }

    /// Negative Hessian by central differences of the analytic gradient,
    /// returned unsymmetrized.
    pub fn neg_hessian_fd(&self, u: &[f64], h: f64) -> DMatrix<f64> {
        let dim = self.dim();
        let cols: Vec<Vec<f64>> = (0..dim)
            .into_par_iter()
            .map(|e| {
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[e] += h;
                dn[e] -= h;
                let gu = self.gradient(&up);
                let gd = self.gradient(&dn);
                gu.iter().zip(&gd).map(|(a, b)| -(a - b) / (2.0 * h)).collect()
            })
            .collect();
        DMatrix::from_fn(dim, dim, |r, c| cols[c][r])
    }

    /// Per-individual scores of the unweighted log-likelihood by central
    /// differences, row-major `n x d`.
    pub fn individual_scores_fd(&self, u: &[f64], h: f64) -> Vec<f64> {
        let dim = self.dim();
        let n = self.data.n;
        let cols: Vec<Vec<f64>> = (0..dim)
            .into_par_iter()
            .map(|e| {
                let mut up = u.to_vec();
                let mut dn = u.to_vec();
                up[e] += h;
                dn[e] -= h;
                let lu = self.individual_loglik(&up);
                let ld = self.individual_loglik(&dn);
                lu.iter().zip(&ld).map(|(a, b)| (a - b) / (2.0 * h)).collect()
            })
            .collect();
        let mut s = vec![0.0; n * dim];
        for (e, col) in cols.iter().enumerate() {
            for i in 0..n {
                s[i * dim + e] = col[i];
            }
        }
        s
    }

    /// Gradient of the log pseudo-posterior by one-sided forward differences.
    pub fn gradient_forward_fd(&self, u: &[f64], h: f64) -> Vec<f64> {
        let base = self.log_posterior(u);
        (0..self.dim())
            .into_par_iter()
            .map(|e| {
                let mut up = u.to_vec();
                up[e] += h;
                (self.log_posterior(&up) - base) / h
            })
            .collect()
    }
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustDiagnostics {
    pub applied: bool,
    pub skipped_reason: Option<String>,
    pub dim: usize,
    pub n_draws: usize,
    pub n_boot_reps: usize,
    pub n_strata: usize,
    pub n_clusters: usize,
    /// `max|H - H'| / max|H|` before symmetrization.
    pub hessian_asymmetry: f64,
    pub hessian_condition: f64,
    pub posterior_cov_condition: f64,
    pub ridge_hessian: f64,
    pub ridge_sandwich: f64,
    pub ridge_posterior: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustedChain {
    pub chain: ChainOutput,
    /// Mean of the unconstrained draws.
    pub centroid: Vec<f64>,
    /// Upper factors, row-major `d x d`; empty when the adjustment was skipped.
    pub r1: Vec<f64>,
    pub r2: Vec<f64>,
    pub diagnostics: AdjustDiagnostics,
}

pub fn unconstrained_draws(chain: &ChainOutput) -> Vec<Vec<f64>> {
    chain.draws.iter().map(to_unconstrained).collect()
}

pub fn mean_vector(draws: &[Vec<f64>]) -> Vec<f64> {
    let d = draws[0].len();
    let mut m = vec![0.0; d];
    for x in draws {
        for (a, b) in m.iter_mut().zip(x) {
            *a += b;
        }
    }
    let n = draws.len() as f64;
    m.iter_mut().for_each(|a| *a /= n);
    m
}

/// Sample covariance with divisor `M - 1`.
pub fn sample_covariance(draws: &[Vec<f64>]) -> DMatrix<f64> {
    let d = draws[0].len();
    let mean = mean_vector(draws);
    let centered = DMatrix::from_fn(draws.len(), d, |r, c| draws[r][c] - mean[c]);
    (centered.transpose() * &centered) / (draws.len() as f64 - 1.0)
}

/// Upper Cholesky factor `R` with `R' R = m + ridge I`, escalating the ridge up to [`MAX_RIDGE`].
pub fn upper_cholesky(m: &DMatrix<f64>, ridge: f64) -> Option<(DMatrix<f64>, f64)> {
    cholesky_with_ridge(m, ridge, MAX_RIDGE).map(|(l, r)| (l.transpose(), r))
}

/// Rescales unconstrained draws: `mean + (x - mean) R2^-1 R1`.
pub fn rescale_unconstrained(
    draws: &[Vec<f64>],
    r1: &DMatrix<f64>,
    r2: &DMatrix<f64>,
) -> Result<Vec<Vec<f64>>> {
    let d = r1.nrows();
    if draws.is_empty() || draws[0].len() != d || r2.shape() != (d, d) || r1.shape() != (d, d) {
        return Err(Error::invalid("rescaling factors do not match the draws"));
    }
    let a = r2
        .solve_upper_triangular(r1)
        .ok_or_else(|| Error::numerical("posterior covariance factor is singular"))?;
    let mean = mean_vector(draws);
    let centered = DMatrix::from_fn(draws.len(), d, |r, c| draws[r][c] - mean[c]);
    let moved = centered * a;
    Ok((0..draws.len())
        .map(|r| (0..d).map(|c| mean[c] + moved[(r, c)]).collect())
        .collect())
}

/// Applies the rescaling to a chain of constrained draws. Identical factors
/// return the chain unchanged.
pub fn apply_rescaling(chain: &ChainOutput, r1: &DMatrix<f64>, r2: &DMatrix<f64>) -> Result<ChainOutput> {
    if r1 == r2 {
        return Ok(chain.clone());
    }
    let layout = UnconstrainedLayout::of(&chain.draws[0]);
    let moved = rescale_unconstrained(&unconstrained_draws(chain), r1, r2)?;
    let mut out = chain.clone();
    out.draws = moved.iter().map(|u| from_unconstrained(u, &layout)).collect();
    Ok(out)
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone()).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (r, c) = m.shape();
    (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])).collect()
}

/// Bootstrap covariance of the weighted total score `sum_i wtilde_i f_i s_i`.
fn bootstrap_score_covariance<R: Rng + ?Sized>(
    scores: &[f64],
    wtilde: &[f64],
    design: &ClusterDesign,
    d: usize,
    reps: usize,
    rng: &mut R,
) -> DMatrix<f64> {
    let totals = design.cluster_totals(scores, wtilde, d);
    let mut replicates = DMatrix::<f64>::zeros(reps, d);
    for b in 0..reps {
        let f = design.bootstrap_factors(rng);
        for (c, fc) in f.iter().enumerate() {
            if *fc == 0.0 {
                continue;
            }
            for e in 0..d {
                replicates[(b, e)] += fc * totals[c * d + e];
            }
        }
    }
    let mean = replicates.row_mean();
    for b in 0..reps {
        for e in 0..d {
            replicates[(b, e)] -= mean[e];
        }
    }
    (replicates.transpose() * &replicates) / (reps as f64 - 1.0)
}

/// Design-adjusts a relabeled SWOLCA chain. When the Hessian is not positive
/// definite the input chain is returned with `diagnostics.applied = false`.
pub fn sandwich_adjust<R: Rng + ?Sized>(
    chain: &ChainOutput,
    dataset: &SurveyDataset,
    coding: &CodingSpec,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<AdjustedChain> {
    if chain.draws.len() < 2 {
        return Err(Error::invalid("sandwich adjustment needs at least two draws"));
    }
    if config.n_boot_reps < 2 {
        return Err(Error::invalid("sandwich adjustment needs at least two bootstrap replicates"));
    }
    let weights = normalize_weights(&dataset.weight)?;
    let data = SamplerData::new(dataset, &coding.with_k(chain.k), weights, chain.q > 0)?;
    let layout = UnconstrainedLayout::of(&chain.draws[0]);
    let target = ObservedPseudoPosterior::new(&data, prior, layout.clone())?;
    let design = ClusterDesign::from_dataset(dataset);
    let dim = layout.dim();

    let draws = unconstrained_draws(chain);
    let centroid = mean_vector(&draws);
    let mut diag = AdjustDiagnostics {
        dim,
        n_draws: draws.len(),
        n_boot_reps: config.n_boot_reps,
        n_strata: design.n_strata(),
        n_clusters: design.n_clusters(),
        ..Default::default()
    };
    let skip = |mut diag: AdjustDiagnostics, reason: String| {
        diag.skipped_reason = Some(reason);
        Ok(AdjustedChain {
            chain: chain.clone(),
            centroid: centroid.clone(),
            r1: vec![],
            r2: vec![],
            diagnostics: diag,
        })
    };

    // Whitening by a rank-deficient draw covariance would keep only a
    // projection of the target covariance.
    if draws.len() <= dim {
        return skip(diag, format!("{} kept draws do not exceed the {dim} unconstrained parameters", draws.len()));
    }

    let h_raw = target.neg_hessian_fd(&centroid, config.fd_step);
    let scale = h_raw.amax();
    diag.hessian_asymmetry = if scale > 0.0 { (&h_raw - h_raw.transpose()).amax() / scale } else { 0.0 };
    let h = (&h_raw + h_raw.transpose()) * 0.5;
    diag.hessian_condition = condition_number(&h);
    let Some((h_chol, ridge_h)) = cholesky_with_ridge(&h, config.ridge, MAX_RIDGE) else {
        return skip(diag, "negative Hessian is not positive definite".into());
    };
    diag.ridge_hessian = ridge_h;
    let l_inv = h_chol
        .solve_lower_triangular(&DMatrix::<f64>::identity(dim, dim))
        .ok_or_else(|| Error::numerical("Hessian factor is singular"))?;
    let h_inv = l_inv.transpose() * l_inv;

    let scores = target.individual_scores_fd(&centroid, config.fd_step);
    let j = bootstrap_score_covariance(&scores, data.wtilde(), &design, dim, config.n_boot_reps, rng);
    let v = &h_inv * j * &h_inv;
    let v = (&v + v.transpose()) * 0.5;
    let Some((r1, ridge_v)) = upper_cholesky(&v, config.ridge) else {
        return skip(diag, "sandwich covariance is not positive definite".into());
    };
    diag.ridge_sandwich = ridge_v;

    let post = sample_covariance(&draws);
    diag.posterior_cov_condition = condition_number(&post);
    let Some((r2, ridge_p)) = upper_cholesky(&post, config.ridge) else {
        return skip(diag, "posterior covariance is not positive definite".into());
    };
    diag.ridge_posterior = ridge_p;

    let moved = rescale_unconstrained(&draws, &r1, &r2)?;
    let mut out = chain.clone();
    out.draws = moved.iter().map(|u| from_unconstrained(u, &layout)).collect();
    diag.applied = true;
    Ok(AdjustedChain {
        chain: out,
        centroid,
        r1: to_row_major(&r1),
        r2: to_row_major(&r2),
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{rng_stream, std_normal};
    use crate::model::ThetaArray;

    /// Three-class toy problem with a probit outcome and one binary covariate.
    pub(crate) fn toy() -> (SurveyDataset, ModelParams) {
        let n = 60;
        let j = 3;
        let mut items = Vec::new();
        let mut y = Vec::new();
        let mut cov = Vec::new();
        for i in 0..n {
            let k = i % 3;
            for jj in 0..j {
                items.push(((k + jj + i / 7) % 3 + 1) as u32);
            }
            y.push(((i * 7 + k) % 5 < 2) as u8);
            cov.push((i % 2) as f64);
        }
        let ds = SurveyDataset {
            n,
            n_items: j,
            items,
            outcome: y,
            n_covariates: 1,
            covariates: cov,
            covariate_names: vec!["v".into()],
            weight: (0..n).map(|i| 1.0 + (i % 4) as f64).collect(),
            stratum: (0..n).map(|i| (i / 30) as i64).collect(),
            cluster: (0..n).map(|i| (i / 5) as i64).collect(),
            item_levels: vec![3; j],
        };
        let theta = ThetaArray::new(&[3, 3, 3], 3, |jj, k, r| if (k + jj) % 3 == r { 0.6 } else { 0.2 });
        let params = ModelParams {
            pi: vec![0.3, 0.3, 0.4],
            theta,
            q: 2,
            xi: vec![0.2, -0.1, -0.3, 0.4, 0.1, 0.05],
        };
        (ds, params)
    }

    fn toy_target(ds: &SurveyDataset) -> SamplerData {
        let w = normalize_weights(&ds.weight).unwrap();
        SamplerData::new(ds, &CodingSpec::full(3, 1), w, true).unwrap()
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let (ds, params) = toy();
        let data = toy_target(&ds);
        let prior = PriorSpec::default_for(3, 3, 2);
        let t = ObservedPseudoPosterior::new(&data, &prior, UnconstrainedLayout::of(&params)).unwrap();
        let u = to_unconstrained(&params);
        let g = t.gradient(&u);
        let central: Vec<f64> = (0..u.len())
            .map(|e| {
                let mut a = u.clone();
                let mut b = u.clone();
                a[e] += 1e-5;
                b[e] -= 1e-5;
                (t.log_posterior(&a) - t.log_posterior(&b)) / 2e-5
            })
            .collect();
        let forward = t.gradient_forward_fd(&u, 1e-7);
        let norm = g.iter().map(|x| x.abs()).fold(0.0, f64::max);
        for e in 0..u.len() {
            assert!((g[e] - central[e]).abs() < 1e-6 * norm.max(1.0), "coord {e}");
            assert!((central[e] - forward[e]).abs() < 1e-4 * norm.max(1.0), "coord {e}");
        }
    }

    #[test]
    fn individual_scores_sum_to_likelihood_gradient() {
        let (ds, params) = toy();
        let data = toy_target(&ds);
        let prior = PriorSpec::default_for(3, 3, 2);
        let t = ObservedPseudoPosterior::new(&data, &prior, UnconstrainedLayout::of(&params)).unwrap();
        let u = to_unconstrained(&params);
        let d = u.len();
        let s = t.individual_scores_fd(&u, 1e-5);
        let prior_grad: Vec<f64> = (0..d)
            .map(|e| {
                let mut a = u.clone();
                let mut b = u.clone();
                a[e] += 1e-5;
                b[e] -= 1e-5;
                (t.log_prior(&a) - t.log_prior(&b)) / 2e-5
            })
            .collect();
        let g = t.gradient(&u);
        let w = data.wtilde();
        for e in 0..d {
            let total: f64 = (0..data.n).map(|i| w[i] * s[i * d + e]).sum();
            assert!((total + prior_grad[e] - g[e]).abs() < 1e-5, "coord {e}");
        }
    }

    #[test]
    fn hessian_is_nearly_symmetric() {
        let (ds, params) = toy();
        let data = toy_target(&ds);
        let prior = PriorSpec::default_for(3, 3, 2);
        let t = ObservedPseudoPosterior::new(&data, &prior, UnconstrainedLayout::of(&params)).unwrap();
        let h = t.neg_hessian_fd(&to_unconstrained(&params), 1e-5);
        let asym = (&h - h.transpose()).amax() / h.amax();
        assert!(asym < 1e-4, "asymmetry {asym}");
    }

    fn synthetic_draws(m: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_stream(seed, 0);
        (0..m)
            .map(|_| {
                let z: Vec<f64> = (0..d).map(|_| std_normal(&mut rng)).collect();
                (0..d).map(|a| 1.0 + z[a] + 0.5 * z[(a + 1) % d]).collect()
            })
            .collect()
    }

    #[test]
    fn rescaling_preserves_mean_and_hits_target_covariance() {
        let draws = synthetic_draws(500, 4, 1);
        let (r2, _) = upper_cholesky(&sample_covariance(&draws), 0.0).unwrap();
        let target = DMatrix::from_row_slice(4, 4, &[
            2.0, 0.3, 0.0, 0.1, 0.3, 1.0, 0.2, 0.0, 0.0, 0.2, 0.5, 0.0, 0.1, 0.0, 0.0, 3.0,
        ]);
        let (r1, _) = upper_cholesky(&target, 0.0).unwrap();
        let out = rescale_unconstrained(&draws, &r1, &r2).unwrap();
        let m0 = mean_vector(&draws);
        let m1 = mean_vector(&out);
        for (a, b) in m0.iter().zip(&m1) {
            assert!((a - b).abs() < 1e-8);
        }
        let cov = sample_covariance(&out);
        assert!((cov - target).amax() < 1e-9);
    }

    #[test]
    fn equal_factors_return_the_chain_bitwise() {
        let chain = crate::postprocess::relabel::tests::clean_chain(10);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        assert_eq!(apply_rescaling(&chain, &r, &r).unwrap(), chain);
    }

    #[test]
    fn adjustment_runs_on_the_toy_chain() {
        let (ds, params) = toy();
        let mut rng = rng_stream(11, 0);
        let layout = UnconstrainedLayout::of(&params);
        let u0 = to_unconstrained(&params);
        // Synthetic draws around a fixed point.
        let draws: Vec<ModelParams> = (0..300)
            .map(|_| {
                let u: Vec<f64> = u0.iter().map(|x| x + 0.1 * std_normal(&mut rng)).collect();
                from_unconstrained(&u, &layout)
            })
            .collect();
        let mut chain = crate::postprocess::relabel::tests::clean_chain(300);
        chain.levels = vec![3, 3, 3];
        chain.q = 2;
        chain.draws = draws;
        chain.c_draws = vec![(0..ds.n).map(|i| (i % 3) as u16).collect(); 300];
        let config = McmcConfig { n_boot_reps: 50, ..McmcConfig::default() };
        let prior = PriorSpec::default_for(3, 3, 2);
        let adj = sandwich_adjust(&chain, &ds, &CodingSpec::full(3, 1), &prior, &config, &mut rng).unwrap();
        assert!(adj.diagnostics.applied, "{:?}", adj.diagnostics);
        let before = mean_vector(&unconstrained_draws(&chain));
        let after = mean_vector(&unconstrained_draws(&adj.chain));
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_draws_skip_the_adjustment() {
        let (ds, params) = toy();
        let mut rng = rng_stream(12, 0);
        let layout = UnconstrainedLayout::of(&params);
        let u0 = to_unconstrained(&params);
        let m = layout.dim();
        let draws: Vec<ModelParams> = (0..m)
            .map(|_| {
                let u: Vec<f64> = u0.iter().map(|x| x + 0.1 * std_normal(&mut rng)).collect();
                from_unconstrained(&u, &layout)
            })
            .collect();
        let mut chain = crate::postprocess::relabel::tests::clean_chain(m);
        chain.levels = vec![3, 3, 3];
        chain.q = 2;
        chain.draws = draws;
        chain.c_draws = vec![(0..ds.n).map(|i| (i % 3) as u16).collect(); m];
        let config = McmcConfig { n_boot_reps: 20, ..McmcConfig::default() };
        let prior = PriorSpec::default_for(3, 3, 2);
        let adj = sandwich_adjust(&chain, &ds, &CodingSpec::full(3, 1), &prior, &config, &mut rng).unwrap();
        assert!(!adj.diagnostics.applied);
        assert!(adj.diagnostics.skipped_reason.is_some());
        assert_eq!(adj.chain, chain);
    }
}
