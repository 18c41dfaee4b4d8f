//! Seeded random variate generators used by the sampler and the simulator.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::erf;

use crate::error::{Error, Result};

/// Generator state: ChaCha8 keyed by a 64-bit seed, with an independent stream id.
pub type RngState = ChaCha8Rng;

pub fn rng_stream(seed: u64, stream: u64) -> RngState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const TAIL_SWITCH: f64 = 5.0;

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard normal CDF.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// log Phi(x), accurate far into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        norm_cdf(x).ln()
    } else {
        // Asymptotic series for the Mills ratio.
        let x2 = x * x;
        -0.5 * x2 - (-x).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
            + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Dirichlet draw by gamma normalization, done in log space so that small
/// concentrations (the sparse `1/K` prior) cannot underflow every coordinate.
pub fn draw_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut out = vec![0.0; alpha.len()];
    draw_dirichlet_into(alpha, rng, &mut out)?;
    Ok(out)
}

pub fn draw_dirichlet_into<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R, out: &mut [f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::invalid("Dirichlet needs at least one coordinate"));
    }
    let mut max = f64::NEG_INFINITY;
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = log_gamma_variate(a, rng)?;
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    Ok(())
}

/// log of a Gamma(shape, 1) variate. Shapes below one use
/// `G(a) = G(a + 1) * U^(1/a)`.
fn log_gamma_variate<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if !(shape.is_finite() && shape > 0.0) {
        return Err(Error::invalid(format!("Dirichlet parameter {shape} must be positive")));
    }
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).unwrap().sample(rng);
        Ok(g.ln())
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).unwrap().sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        Ok(g.ln() + u.ln() / shape)
    }
}

/// Index (0-based) drawn with probabilities `p`.
pub fn draw_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize> {
    let sum: f64 = p.iter().sum();
    if p.is_empty() || p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("not a probability vector: {p:?}")));
    }
    Ok(categorical_unnormalized(p, sum, rng))
}

/// Inverse-CDF draw from nonnegative weights with known total.
#[inline]
pub(crate) fn categorical_unnormalized<R: Rng + ?Sized>(w: &[f64], total: f64, rng: &mut R) -> usize {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &x) in w.iter().enumerate() {
        if x > 0.0 {
            acc += x;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Draw from N(mean, 1) restricted to `(lower, upper)`. Either bound may be infinite.
///
/// Inverse-CDF sampling near the bulk, one-sided exponential rejection once the
/// interval starts more than five standard deviations into a tail.
pub fn draw_truncnormal<R: Rng + ?Sized>(mean: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(lower < upper) || mean.is_nan() {
        return Err(Error::invalid(format!("empty truncation interval ({lower}, {upper})")));
    }
    let a = lower - mean;
    let b = upper - mean;
    loop {
        let x = if a > TAIL_SWITCH {
            tail_exponential(a, b, rng)
        } else if b < -TAIL_SWITCH {
            -tail_exponential(-b, -a, rng)
        } else if a > 0.0 {
            // Work in the upper tail for precision.
            let pa = norm_cdf(-a);
            let pb = norm_cdf(-b);
            let u: f64 = rng.random();
            -norm_quantile(pb + u * (pa - pb))
        } else {
            let pa = norm_cdf(a);
            let pb = norm_cdf(b);
            let u: f64 = rng.random();
            norm_quantile(pa + u * (pb - pa))
        };
        let z = mean + x;
        if z > lower && z < upper && z.is_finite() {
            return Ok(z);
        }
    }
}

/// Robert (1995) exponential rejection sampler on `[a, b)` with `a > 0`.
fn tail_exponential<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random();
        let x = a - (1.0 - u).ln() / lambda;
        if x >= b {
            continue;
        }
        let rho = (-(x - lambda).powi(2) / 2.0).exp();
        if rng.random::<f64>() <= rho {
            return x;
        }
    }
}

/// Lower Cholesky factor, adding `ridge * I` and escalating tenfold up to
/// `max_ridge` until the factorization succeeds. Returns the factor and the
/// ridge actually used.
pub fn cholesky_with_ridge(
    m: &DMatrix<f64>,
    ridge: f64,
    max_ridge: f64,
) -> Option<(DMatrix<f64>, f64)> {
    let sym = (m + m.transpose()) * 0.5;
    if let Some(c) = sym.clone().cholesky() {
        return Some((c.l(), 0.0));
    }
    let n = m.nrows();
    let mut r = ridge.max(f64::MIN_POSITIVE);
    while r <= max_ridge * (1.0 + 1e-12) {
        let shifted = &sym + DMatrix::<f64>::identity(n, n) * r;
        if let Some(c) = shifted.cholesky() {
            return Some((c.l(), r));
        }
        r *= 10.0;
    }
    None
}

/// Multivariate normal draw `mean + L z`.
pub fn draw_mvnormal<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    ridge: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let q = mean.len();
    if cov.nrows() != q || cov.ncols() != q {
        return Err(Error::invalid("covariance dimension mismatch"));
    }
    let (l, _) = cholesky_with_ridge(cov, ridge, ridge.max(1e-4))
        .ok_or_else(|| Error::numerical("covariance is not positive definite"))?;
    let z = DVector::from_fn(q, |_, _| std_normal(rng));
    Ok(mean + l * z)
}

/// Uniform random permutation of `0..k` (Fisher-Yates).
pub fn draw_permutation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..k).collect();
    p.shuffle(rng);
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    const DRAWS: usize = 100_000;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut r1 = rng_stream(7, 3);
        let mut r2 = rng_stream(7, 3);
        let mut r3 = rng_stream(7, 4);
        let x: Vec<u64> = (0..5).map(|_| r1.random()).collect();
        let y: Vec<u64> = (0..5).map(|_| r2.random()).collect();
        let z: Vec<u64> = (0..5).map(|_| r3.random()).collect();
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn dirichlet_concentrated() {
        let mut rng = rng_stream(1, 0);
        let d = draw_dirichlet(&[1e9, 1e9], &mut rng).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn dirichlet_means() {
        let mut rng = rng_stream(2, 0);
        let mut m = [0.0; 3];
        for _ in 0..DRAWS {
            let d = draw_dirichlet(&[1.0, 1.0, 1.0], &mut rng).unwrap();
            for (a, b) in m.iter_mut().zip(&d) {
                *a += b / DRAWS as f64;
            }
        }
        for v in m {
            assert!((v - 1.0 / 3.0).abs() < 0.01);
        }
        let mut m0 = 0.0;
        for _ in 0..DRAWS {
            m0 += draw_dirichlet(&[2.0, 6.0], &mut rng).unwrap()[0] / DRAWS as f64;
        }
        assert!((m0 - 0.25).abs() < 0.01, "{m0}");
    }

    #[test]
    fn dirichlet_tiny_alpha_stays_on_simplex() {
        let mut rng = rng_stream(3, 0);
        for _ in 0..1000 {
            let d = draw_dirichlet(&[1.0 / 30.0; 30], &mut rng).unwrap();
            let s: f64 = d.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(d.iter().all(|x| *x >= 0.0));
        }
        assert!(draw_dirichlet(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn categorical_examples() {
        let mut rng = rng_stream(4, 0);
        for _ in 0..1000 {
            assert_eq!(draw_categorical(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 0);
        }
        let mut hits = 0;
        for _ in 0..DRAWS {
            hits += (draw_categorical(&[0.5, 0.5], &mut rng).unwrap() == 0) as usize;
        }
        assert!((hits as f64 / DRAWS as f64 - 0.5).abs() < 0.01);
        let p = [0.2, 0.3, 0.5];
        let mut counts = [0usize; 3];
        for _ in 0..DRAWS {
            counts[draw_categorical(&p, &mut rng).unwrap()] += 1;
        }
        for (c, q) in counts.iter().zip(p) {
            assert!((*c as f64 / DRAWS as f64 - q).abs() < 0.01);
        }
        assert!(draw_categorical(&[0.5, 0.6], &mut rng).is_err());
    }

    #[test]
    fn truncnormal_half_normal_mean() {
        let mut rng = rng_stream(5, 0);
        let mut sum = 0.0;
        for _ in 0..DRAWS {
            let z = draw_truncnormal(0.0, 0.0, f64::INFINITY, &mut rng).unwrap();
            assert!(z > 0.0);
            sum += z;
        }
        let want = (2.0 / std::f64::consts::PI).sqrt();
        assert!((sum / DRAWS as f64 - want).abs() < 0.01);
        for _ in 0..1000 {
            assert!(draw_truncnormal(0.0, f64::NEG_INFINITY, 0.0, &mut rng).unwrap() < 0.0);
        }
    }

    #[test]
    fn truncnormal_extreme_offsets() {
        let mut rng = rng_stream(6, 0);
        for mean in [-30.0, -10.0, -5.5, 5.5, 10.0, 30.0] {
            for _ in 0..2000 {
                let up = draw_truncnormal(mean, 0.0, f64::INFINITY, &mut rng).unwrap();
                assert!(up.is_finite() && up > 0.0);
                let down = draw_truncnormal(mean, f64::NEG_INFINITY, 0.0, &mut rng).unwrap();
                assert!(down.is_finite() && down < 0.0);
            }
        }
        // Two-sided interval in the far tail.
        for _ in 0..1000 {
            let z = draw_truncnormal(-10.0, 0.0, 0.5, &mut rng).unwrap();
            assert!(z > 0.0 && z < 0.5);
        }
        assert!(draw_truncnormal(0.0, 1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn truncnormal_far_tail_mean_matches_quadrature() {
        // E[X | X > 6] for X ~ N(0,1) is phi(6)/(1-Phi(6)); trapezoid quadrature on [6, 20].
        let (mut num, mut den) = (0.0, 0.0);
        let h = 1e-4;
        let mut x: f64 = 6.0;
        while x < 20.0 {
            let f = (-0.5 * x * x as f64).exp();
            let w = if x == 6.0 { 0.5 } else { 1.0 };
            num += w * x * f;
            den += w * f;
            x += h;
        }
        let want = num / den;
        let mut rng = rng_stream(7, 0);
        let n = 50_000;
        let mean: f64 = (0..n)
            .map(|_| draw_truncnormal(0.0, 6.0, f64::INFINITY, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - want).abs() < 0.005, "{mean} vs {want}");
    }

    #[test]
    fn mvnormal_examples() {
        let mut rng = rng_stream(8, 0);
        let mean = DVector::from_vec(vec![1.0, 2.0]);
        let tiny = DMatrix::<f64>::identity(2, 2) * 1e-12;
        let d = draw_mvnormal(&mean, &tiny, 1e-8, &mut rng).unwrap();
        assert!((d - &mean).amax() < 1e-4);

        let zero = DVector::zeros(2);
        let eye = DMatrix::<f64>::identity(2, 2);
        let mut s = DMatrix::<f64>::zeros(2, 2);
        for _ in 0..DRAWS {
            let x = draw_mvnormal(&zero, &eye, 1e-8, &mut rng).unwrap();
            s += &x * x.transpose() / DRAWS as f64;
        }
        assert!((s - eye).amax() < 0.05);

        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut m = DVector::zeros(2);
        for _ in 0..DRAWS {
            m += draw_mvnormal(&mean, &cov, 1e-8, &mut rng).unwrap() / DRAWS as f64;
        }
        assert!((m - mean).amax() < 0.02);
    }

    #[test]
    fn permutation_frequencies() {
        let mut rng = rng_stream(9, 0);
        assert_eq!(draw_permutation(1, &mut rng), vec![0]);
        let ident = (0..DRAWS)
            .filter(|_| draw_permutation(2, &mut rng) == vec![0, 1])
            .count();
        assert!((ident as f64 / DRAWS as f64 - 0.5).abs() < 0.01);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..DRAWS {
            *counts.entry(draw_permutation(3, &mut rng)).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6);
        for c in counts.values() {
            assert!((*c as f64 / DRAWS as f64 - 1.0 / 6.0).abs() < 0.01);
        }
    }

    #[test]
    fn log_norm_cdf_tail_continuity() {
        let a = log_norm_cdf(-29.999);
        let b = log_norm_cdf(-30.001);
        assert!((a - b).abs() < 0.1);
        assert!((log_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-14);
        assert!((norm_quantile(norm_cdf(1.3)) - 1.3).abs() < 1e-10);
    }
}
