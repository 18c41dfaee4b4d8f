//! Additive log-ratio coordinates for the constrained parameters. The last
//! coordinate of every simplex is the reference.

use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, ThetaArray};

pub const SIMPLEX_FLOOR: f64 = 1e-8;

/// Shape of the unconstrained vector: `(K-1) + sum_j K (R_j - 1) + K q` entries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnconstrainedLayout {
    pub k: usize,
    pub levels: Vec<usize>,
    pub q: usize,
}

impl UnconstrainedLayout {
    pub fn of(params: &ModelParams) -> Self {
        UnconstrainedLayout { k: params.k(), levels: params.theta.levels.clone(), q: params.q }
    }

    pub fn n_pi(&self) -> usize {
        self.k - 1
    }

    pub fn n_theta(&self) -> usize {
        self.levels.iter().map(|r| self.k * (r - 1)).sum()
    }

    pub fn theta_start(&self) -> usize {
        self.n_pi()
    }

    pub fn xi_start(&self) -> usize {
        self.n_pi() + self.n_theta()
    }

    pub fn dim(&self) -> usize {
        self.xi_start() + self.k * self.q
    }
}

fn floored(p: &[f64]) -> Vec<f64> {
    let f: Vec<f64> = p.iter().map(|x| x.max(SIMPLEX_FLOOR)).collect();
    let s: f64 = f.iter().sum();
    f.into_iter().map(|x| x / s).collect()
}

pub fn alr(p: &[f64]) -> Vec<f64> {
    let f = floored(p);
    let last = f[f.len() - 1].ln();
    f[..f.len() - 1].iter().map(|x| x.ln() - last).collect()
}

pub fn alr_inverse(a: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + 1);
    alr_inverse_into(a, &mut out);
    out
}

pub(crate) fn alr_inverse_into(a: &[f64], out: &mut Vec<f64>) {
    let max = a.iter().copied().fold(0.0f64, f64::max);
    let start = out.len();
    out.extend(a.iter().map(|x| (x - max).exp()));
    out.push((-max).exp());
    let s: f64 = out[start..].iter().sum();
    out[start..].iter_mut().for_each(|x| *x /= s);
}

pub fn to_unconstrained(params: &ModelParams) -> Vec<f64> {
    let layout = UnconstrainedLayout::of(params);
    let mut u = Vec::with_capacity(layout.dim());
    u.extend(alr(&params.pi));
    for j in 0..params.theta.n_items() {
        for k in 0..params.k() {
            u.extend(alr(params.theta.simplex(j, k)));
        }
    }
    u.extend_from_slice(&params.xi);
    u
}

pub fn from_unconstrained(u: &[f64], layout: &UnconstrainedLayout) -> ModelParams {
    assert_eq!(u.len(), layout.dim(), "unconstrained vector has the wrong length");
    let pi = alr_inverse(&u[..layout.n_pi()]);
    let mut theta_data = Vec::with_capacity(layout.n_theta() + layout.k * layout.levels.len());
    let mut pos = layout.theta_start();
    for &r in &layout.levels {
        for _ in 0..layout.k {
            alr_inverse_into(&u[pos..pos + r - 1], &mut theta_data);
            pos += r - 1;
        }
    }
    let mut theta = ThetaArray::uniform(&layout.levels, layout.k);
    theta.data = theta_data;
    ModelParams { pi, theta, q: layout.q, xi: u[layout.xi_start()..].to_vec() }
}
