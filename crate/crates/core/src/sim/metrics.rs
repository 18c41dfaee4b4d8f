//! Class alignment against the truth and the bias / width / coverage metrics.

use serde::{Deserialize, Serialize};

use crate::assign::min_cost_assignment;
use crate::error::{Error, Result};
use crate::model::ThetaArray;
use crate::postprocess::summary::{ChainSummary, Interval};

/// Generating parameters a fit is scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub pi: Vec<f64>,
    pub theta: ThetaArray,
    /// Row-major `K x q`.
    pub xi: Vec<f64>,
    pub q: usize,
}

impl Truth {
    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// For each true class, the estimated class matched to it (`None` when fewer
/// classes were estimated), minimizing the total L1 distance between item
/// probability profiles.
pub fn align_classes(theta_hat: &ThetaArray, theta_true: &ThetaArray) -> Vec<Option<usize>> {
    let (kh, kt) = (theta_hat.k, theta_true.k);
    let dist = |est: usize, tru: usize| -> f64 {
        (0..theta_true.n_items())
            .map(|j| {
                theta_hat
                    .simplex(j, est)
                    .iter()
                    .zip(theta_true.simplex(j, tru))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
            })
            .sum()
    };
    if kt <= kh {
        let cost: Vec<Vec<f64>> = (0..kt).map(|t| (0..kh).map(|e| dist(e, t)).collect()).collect();
        min_cost_assignment(&cost).into_iter().map(Some).collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..kh).map(|e| (0..kt).map(|t| dist(e, t)).collect()).collect();
        let mut out = vec![None; kt];
        for (e, t) in min_cost_assignment(&cost).into_iter().enumerate() {
            out[t] = Some(e);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockMetrics {
    pub bias: f64,
    pub width: f64,
    pub coverage: f64,
    /// Number of (replicate, parameter) cells averaged.
    pub cells: usize,
}

#[derive(Default)]
struct Accumulator {
    bias: f64,
    width: f64,
    covered: usize,
    cells: usize,
}

impl Accumulator {
    fn add(&mut self, iv: &Interval, truth: f64) {
        self.bias += (iv.median - truth).abs();
        self.width += iv.width();
        self.covered += iv.covers(truth) as usize;
        self.cells += 1;
    }

    fn merge(&mut self, other: &Accumulator) {
        self.bias += other.bias;
        self.width += other.width;
        self.covered += other.covered;
        self.cells += other.cells;
    }

    fn finish(&self) -> BlockMetrics {
        if self.cells == 0 {
            return BlockMetrics::default();
        }
        let c = self.cells as f64;
        BlockMetrics {
            bias: self.bias / c,
            width: self.width / c,
            coverage: self.covered as f64 / c,
            cells: self.cells,
        }
    }
}

/// Metrics of one fit against the truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub k_hat: usize,
    pub alignment: Vec<Option<usize>>,
    pub pi: BlockMetrics,
    pub theta: BlockMetrics,
    pub xi: BlockMetrics,
}

fn accumulate(summary: &ChainSummary, truth: &Truth) -> Result<(Vec<Option<usize>>, [Accumulator; 3])> {
    if summary.levels != truth.theta.levels {
        return Err(Error::invalid("fitted item levels differ from the truth"));
    }
    if !summary.xi.is_empty() && summary.q != truth.q {
        return Err(Error::invalid(format!(
            "fitted coefficient blocks have {} entries, truth has {}",
            summary.q, truth.q
        )));
    }
    let theta_hat = summary.theta_median();
    let align = align_classes(&theta_hat, &truth.theta);
    let mut acc: [Accumulator; 3] = Default::default();
    for (t, est) in align.iter().enumerate() {
        let Some(e) = *est else { continue };
        acc[0].add(&summary.pi[e], truth.pi[t]);
        for j in 0..truth.theta.n_items() {
            let r_j = truth.theta.levels[j];
            for r in 0..r_j {
                let idx = theta_hat.index(j, e, r);
                acc[1].add(&summary.theta[idx], truth.theta.get(j, t, r));
            }
        }
        if !summary.xi.is_empty() {
            for p in 0..truth.q {
                acc[2].add(&summary.xi[e * summary.q + p], truth.xi[t * truth.q + p]);
            }
        }
    }
    Ok((align, acc))
}

pub fn replicate_metrics(summary: &ChainSummary, truth: &Truth) -> Result<ReplicateMetrics> {
    let (alignment, acc) = accumulate(summary, truth)?;
    Ok(ReplicateMetrics {
        k_hat: summary.k,
        alignment,
        pi: acc[0].finish(),
        theta: acc[1].finish(),
        xi: acc[2].finish(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: String,
    pub replicates: usize,
    pub failed: usize,
    /// Mean `|k_hat - K_true|`.
    pub k_bias: f64,
    pub pi: BlockMetrics,
    pub theta: BlockMetrics,
    pub xi: BlockMetrics,
}

/// Pools cells across replicates: every block metric averages over all
/// (replicate, class, element) cells, as in `1/(LK) sum_{l,k}`.
pub fn compute_metrics(model: &str, summaries: &[ChainSummary], truth: &Truth) -> Result<ModelMetrics> {
    if summaries.is_empty() {
        return Err(Error::invalid(format!("no successful fits for {model}")));
    }
    let mut total: [Accumulator; 3] = Default::default();
    let mut k_bias = 0.0;
    for s in summaries {
        let (_, acc) = accumulate(s, truth)?;
        for (t, a) in total.iter_mut().zip(&acc) {
            t.merge(a);
        }
        k_bias += (s.k as f64 - truth.k() as f64).abs();
    }
    Ok(ModelMetrics {
        model: model.to_string(),
        replicates: summaries.len(),
        failed: 0,
        k_bias: k_bias / summaries.len() as f64,
        pi: total[0].finish(),
        theta: total[1].finish(),
        xi: total[2].finish(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> Truth {
        let theta = ThetaArray::new(&[3, 3], 3, |j, k, r| if (j + k) % 3 == r { 0.8 } else { 0.1 });
        Truth { pi: vec![0.5, 0.3, 0.2], theta, xi: vec![1.0, -1.0, 0.5], q: 1 }
    }

    fn exact(t: &Truth) -> ChainSummary {
        let point = |x: f64| Interval { median: x, lower: x, upper: x };
        ChainSummary {
            k: t.k(),
            q: t.q,
            levels: t.theta.levels.clone(),
            n_draws: 1,
            pi: t.pi.iter().map(|&x| point(x)).collect(),
            pi_raw_median: t.pi.clone(),
            theta: t.theta.data.iter().map(|&x| point(x)).collect(),
            xi: t.xi.iter().map(|&x| point(x)).collect(),
            xi_prob_positive: vec![],
        }
    }

    #[test]
    fn alignment_examples() {
        let t = truth();
        assert_eq!(align_classes(&t.theta, &t.theta), vec![Some(0), Some(1), Some(2)]);
        let swapped = t.theta.permuted(&[1, 0, 2]);
        assert_eq!(align_classes(&swapped, &t.theta), vec![Some(1), Some(0), Some(2)]);
        // Perturb by +-0.02 and renormalize.
        let mut noisy = t.theta.clone();
        for (i, x) in noisy.data.iter_mut().enumerate() {
            *x += if i % 2 == 0 { 0.02 } else { -0.02 };
        }
        for j in 0..2 {
            for k in 0..3 {
                let s: f64 = noisy.simplex(j, k).iter().sum();
                noisy.simplex_mut(j, k).iter_mut().for_each(|x| *x /= s);
            }
        }
        assert_eq!(align_classes(&noisy, &t.theta), vec![Some(0), Some(1), Some(2)]);
    }

    #[test]
    fn fewer_estimated_classes_leave_a_gap() {
        let t = truth();
        let two = ThetaArray::new(&[3, 3], 2, |j, k, r| t.theta.get(j, k + 1, r));
        assert_eq!(align_classes(&two, &t.theta), vec![None, Some(0), Some(1)]);
    }

    #[test]
    fn exact_estimates_score_perfectly() {
        let t = truth();
        let m = compute_metrics("m", &[exact(&t)], &t).unwrap();
        for b in [m.pi, m.theta, m.xi] {
            assert_eq!((b.bias, b.width, b.coverage), (0.0, 0.0, 1.0));
        }
        assert_eq!(m.k_bias, 0.0);
    }

    #[test]
    fn bias_formula_arithmetic() {
        let t = truth();
        let mut a = exact(&t);
        let mut b = exact(&t);
        a.pi[0].median += 0.01;
        b.pi[0].median -= 0.03;
        let m = compute_metrics("m", &[a, b], &t).unwrap();
        assert!((m.pi.bias - 0.04 / 6.0).abs() < 1e-12);
        assert!((m.pi.coverage - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_counts_cells() {
        let t = Truth { pi: vec![1.0], theta: ThetaArray::uniform(&[2], 1), xi: vec![0.0], q: 1 };
        let fits: Vec<ChainSummary> = (0..100)
            .map(|l| {
                let mut s = exact(&t);
                if l < 7 {
                    s.xi[0] = Interval { median: 1.0, lower: 0.5, upper: 1.5 };
                }
                s
            })
            .collect();
        let m = compute_metrics("m", &fits, &t).unwrap();
        assert!((m.xi.coverage - 0.93).abs() < 1e-12);
    }

    #[test]
    fn empty_fit_set_is_an_error() {
        assert!(compute_metrics("m", &[], &truth()).is_err());
    }
}
