//! Two-step comparator: an unsupervised weighted latent class fit, then a
//! survey-weighted probit regression on the modal class assignments with
//! Taylor-linearized (design-based) variance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::data::SurveyDataset;
use crate::design::ClusterDesign;
use crate::dist::{log_norm_cdf, log_norm_pdf, norm_cdf};
use crate::error::{Error, Result};
use crate::gibbs::{dot, run_two_stage, AdaptiveOutcome, SamplerData};
use crate::model::{build_design_row, normalize_weights, CodingSpec, McmcConfig, PriorSpec};
use crate::postprocess::relabel::{relabel, RelabeledChain};
use crate::postprocess::summary::Interval;

const MAX_NEWTON_ITER: usize = 100;
const GRADIENT_TOL: f64 = 1e-8;
/// Coefficients beyond this magnitude indicate (quasi-)separation.
const SEPARATION_BOUND: f64 = 20.0;
/// Fitted probabilities this close to 0 or 1 indicate separation.
const PINNED_PROB: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolcaStep1 {
    pub adaptive: AdaptiveOutcome,
    pub relabeled: RelabeledChain,
    /// 0-based modal class per individual.
    pub modal_class: Vec<usize>,
}

/// Unsupervised weighted two-stage run, relabeling, and modal assignment.
/// The outcome column is never read.
pub fn fit_wolca_step1<R: Rng + ?Sized>(
    dataset: &SurveyDataset,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<WolcaStep1> {
    let weights = normalize_weights(&dataset.weight)?;
    let coding = CodingSpec::intercept_only(1, dataset.n_covariates);
    let data = SamplerData::new(dataset, &coding, weights, false)?;
    let (adaptive, chain) = run_two_stage(&data, prior, config, rng)?;
    let relabeled = relabel(&chain, adaptive.k_hat)?;
    let modal_class = relabeled.modal_classes();
    Ok(WolcaStep1 { adaptive, relabeled, modal_class })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    /// Same layout as the class-block coefficients: row-major `K x q`.
    pub coef: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub df: usize,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl ProbitFit {
    /// Wald intervals, with the estimate in the `median` slot.
    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.coef.len())
            .map(|i| Interval { median: self.coef[i], lower: self.lower[i], upper: self.upper[i] })
            .collect()
    }
}

struct ProbitProblem {
    x: DMatrix<f64>,
    y: Vec<u8>,
    w: Vec<f64>,
}

impl ProbitProblem {
    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.x * beta;
        (0..self.y.len())
            .map(|i| {
                let e = if self.y[i] == 1 { eta[i] } else { -eta[i] };
                self.w[i] * log_norm_cdf(e)
            })
            .sum()
    }

    /// Per-individual score multipliers `d l_i / d eta_i` and curvature
    /// `-d^2 l_i / d eta_i^2`.
    fn derivatives(&self, beta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let eta = &self.x * beta;
        let mut g = Vec::with_capacity(self.y.len());
        let mut c = Vec::with_capacity(self.y.len());
        for (i, &y) in self.y.iter().enumerate() {
            let s = if y == 1 { 1.0 } else { -1.0 };
            let e = s * eta[i];
            let lambda = (log_norm_pdf(e) - log_norm_cdf(e)).exp();
            g.push(s * lambda);
            c.push(lambda * (lambda + e));
        }
        (g, c)
    }

    fn score_and_info(&self, beta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let (g, c) = self.derivatives(beta);
        let p = self.x.ncols();
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for i in 0..self.y.len() {
            let row = self.x.row(i);
            score += row.transpose() * (self.w[i] * g[i]);
            info += row.transpose() * row * (self.w[i] * c[i]);
        }
        (score, info)
    }
}

/// Weighted probit MLE on the mixture-reference design built from `modal_class`,
/// with linearized variance and t intervals on `#clusters - #strata` df.
pub fn fit_weighted_probit(
    dataset: &SurveyDataset,
    coding: &CodingSpec,
    modal_class: &[usize],
) -> Result<ProbitFit> {
    let n = dataset.n;
    if modal_class.len() != n {
        return Err(Error::invalid("modal class vector length differs from dataset"));
    }
    let mut counts = vec![0usize; coding.k];
    for &c in modal_class {
        if c >= coding.k {
            return Err(Error::invalid(format!("class {} exceeds K={}", c + 1, coding.k)));
        }
        counts[c] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::numerical(format!("class {} has no members", empty + 1)));
    }
    let p = coding.row_width();
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let row = build_design_row(modal_class[i], dataset.covariate_row(i), coding)?;
        for (a, v) in row.into_iter().enumerate() {
            x[(i, a)] = v;
        }
    }
    let w = normalize_weights(&dataset.weight)?.wtilde;
    let problem = ProbitProblem { x, y: dataset.outcome.clone(), w };

    let mut beta = DVector::zeros(p);
    let mut ll = problem.loglik(&beta);
    let mut iterations = 0;
    let mut gradient_norm;
    loop {
        let (score, info) = problem.score_and_info(&beta);
        gradient_norm = score.norm();
        if gradient_norm < GRADIENT_TOL {
            break;
        }
        if iterations == MAX_NEWTON_ITER {
            return Err(Error::Convergence(format!(
                "weighted probit did not converge in {MAX_NEWTON_ITER} iterations (|score| = {gradient_norm:.3e})"
            )));
        }
        let step = info
            .cholesky()
            .map(|c| c.solve(&score))
            .ok_or_else(|| Error::numerical("probit information matrix is singular"))?;
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let cand_ll = problem.loglik(&cand);
            // Near the optimum the gain is below rounding error; allow that slack.
            if cand_ll >= ll - 1e-12 * (1.0 + ll.abs()) || t < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if beta.amax() > SEPARATION_BOUND {
            return Err(Error::Convergence(
                "weighted probit diverges; outcome is separated by class".into(),
            ));
        }
    }

    let eta = &problem.x * &beta;
    if eta.iter().any(|&e| norm_cdf(-e.abs()) < PINNED_PROB) {
        return Err(Error::Convergence(
            "fitted outcome probabilities pinned at 0 or 1; outcome is separated by class".into(),
        ));
    }
    let (g, _) = problem.derivatives(&beta);
    let (_, info) = problem.score_and_info(&beta);
    let mut scores = vec![0.0; n * p];
    for i in 0..n {
        for a in 0..p {
            scores[i * p + a] = g[i] * problem.x[(i, a)];
        }
    }
    let design = ClusterDesign::from_dataset(dataset);
    let df = design.degrees_of_freedom();
    if df == 0 {
        return Err(Error::invalid("design has no residual degrees of freedom"));
    }
    let totals = design.cluster_totals(&scores, &problem.w, p);
    let meat = DMatrix::from_row_slice(p, p, &design.linearized_meat(&totals, p));
    let bread = info
        .try_inverse()
        .ok_or_else(|| Error::numerical("probit information matrix is singular"))?;
    let cov = &bread * meat * &bread;
    let cov = (&cov + cov.transpose()) * 0.5;
    let tq = StudentsT::new(0.0, 1.0, df as f64)
        .map_err(|e| Error::numerical(e.to_string()))?
        .inverse_cdf(0.975);
    let se: Vec<f64> = (0..p).map(|a| cov[(a, a)].max(0.0).sqrt()).collect();
    let coef: Vec<f64> = beta.iter().copied().collect();
    Ok(ProbitFit {
        lower: coef.iter().zip(&se).map(|(b, s)| b - tq * s).collect(),
        upper: coef.iter().zip(&se).map(|(b, s)| b + tq * s).collect(),
        cov: (0..p).flat_map(|a| (0..p).map(move |b| (a, b))).map(|ab| cov[ab]).collect(),
        coef,
        se,
        df,
        iterations,
        gradient_norm,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WolcaFit {
    pub step1: WolcaStep1,
    pub step2: ProbitFit,
}

pub fn fit_wolca<R: Rng + ?Sized>(
    dataset: &SurveyDataset,
    coding: &CodingSpec,
    prior: &PriorSpec,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<WolcaFit> {
    let step1 = fit_wolca_step1(dataset, prior, config, rng)?;
    let coding = coding.with_k(step1.adaptive.k_hat);
    let step2 = fit_weighted_probit(dataset, &coding, &step1.modal_class)?;
    Ok(WolcaFit { step1, step2 })
}

/// Linear predictor of a fitted class block.
pub fn probit_linear_predictor(fit: &ProbitFit, q: usize, class: usize, block: &[f64]) -> f64 {
    dot(&fit.coef[class * q..(class + 1) * q], block)
}

/// `Phi` of the linear predictor, with the t interval of the linear predictor
/// mapped through `Phi`.
pub fn probit_outcome_probability(fit: &ProbitFit, q: usize, class: usize, block: &[f64]) -> Result<Interval> {
    let p = fit.coef.len();
    if q == 0 || block.len() != q || (class + 1) * q > p {
        return Err(Error::invalid(format!(
            "class {} with a {}-entry block does not fit {} coefficients",
            class + 1,
            block.len(),
            p
        )));
    }
    let eta = probit_linear_predictor(fit, q, class, block);
    let off = class * q;
    let mut var = 0.0;
    for a in 0..q {
        for b in 0..q {
            var += block[a] * block[b] * fit.cov[(off + a) * p + off + b];
        }
    }
    let tq = StudentsT::new(0.0, 1.0, fit.df as f64)
        .map_err(|e| Error::numerical(e.to_string()))?
        .inverse_cdf(0.975);
    let half = tq * var.max(0.0).sqrt();
    Ok(Interval { median: norm_cdf(eta), lower: norm_cdf(eta - half), upper: norm_cdf(eta + half) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{norm_cdf, norm_quantile};

    fn intercept_data(y: Vec<u8>, w: Vec<f64>) -> SurveyDataset {
        let n = y.len();
        SurveyDataset {
            n,
            n_items: 1,
            items: vec![1; n],
            outcome: y,
            n_covariates: 0,
            covariates: vec![],
            covariate_names: vec![],
            weight: w,
            stratum: (0..n).map(|i| (i % 2) as i64).collect(),
            cluster: (0..n as i64).collect(),
            item_levels: vec![2],
        }
    }

    #[test]
    fn balanced_outcome_gives_zero_intercept() {
        let ds = intercept_data((0..40).map(|i| (i % 2) as u8).collect(), vec![1.0; 40]);
        let fit = fit_weighted_probit(&ds, &CodingSpec::full(1, 0), &[0; 40]).unwrap();
        assert!(fit.coef[0].abs() < 1e-10);
        assert_eq!(fit.df, 38);
    }

    #[test]
    fn weighted_mean_0841_gives_intercept_near_one() {
        // Weighted outcome mean exactly 0.841: 841 units with y = 1 of total weight 841.
        let mut y = vec![1u8; 100];
        y.extend(vec![0u8; 100]);
        let mut w = vec![8.41; 100];
        w.extend(vec![1.59; 100]);
        let ds = intercept_data(y, w);
        let fit = fit_weighted_probit(&ds, &CodingSpec::full(1, 0), &[0; 200]).unwrap();
        assert!((fit.coef[0] - norm_quantile(0.841)).abs() < 1e-8);
        assert!((fit.coef[0] - 1.0).abs() < 0.01);
        assert!((norm_cdf(fit.coef[0]) - 0.841).abs() < 1e-9);
    }

    #[test]
    fn doubling_weights_changes_nothing() {
        let y: Vec<u8> = (0..60).map(|i| ((i * 7) % 5 < 2) as u8).collect();
        let w: Vec<f64> = (0..60).map(|i| 1.0 + (i % 3) as f64).collect();
        let mut ds = intercept_data(y, w.clone());
        ds.n_covariates = 1;
        ds.covariates = (0..60).map(|i| (i % 2) as f64).collect();
        ds.covariate_names = vec!["v".into()];
        ds.stratum = (0..60).map(|i| (i / 30) as i64).collect();
        ds.cluster = (0..60).map(|i| (i / 3) as i64).collect();
        let classes: Vec<usize> = (0..60).map(|i| (i / 4) % 2).collect();
        let coding = CodingSpec::full(2, 1);
        let a = fit_weighted_probit(&ds, &coding, &classes).unwrap();
        ds.weight = w.iter().map(|x| 2.0 * x).collect();
        let b = fit_weighted_probit(&ds, &coding, &classes).unwrap();
        assert_eq!(a, b);
        assert!(a.gradient_norm < 1e-8);
        for (l, (u, c)) in a.lower.iter().zip(a.upper.iter().zip(&a.coef)) {
            assert!(((c - l) - (u - c)).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_class_is_an_error() {
        let ds = intercept_data(vec![0, 1, 0, 1], vec![1.0; 4]);
        assert!(fit_weighted_probit(&ds, &CodingSpec::full(2, 0), &[0; 4]).is_err());
    }

    #[test]
    fn separated_outcome_is_a_convergence_error() {
        let ds = intercept_data(vec![0, 0, 1, 1], vec![1.0; 4]);
        let err = fit_weighted_probit(&ds, &CodingSpec::full(2, 0), &[0, 0, 1, 1]).unwrap_err();
        assert!(matches!(err, Error::Convergence(_)), "{err}");
    }
}
