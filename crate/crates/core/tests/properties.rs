use proptest::prelude::*;

use swolca::dist::{draw_dirichlet, draw_truncnormal, rng_stream, std_normal};
use swolca::gibbs::{log_pseudo_posterior, permute_labels, run_two_stage, GibbsState, SamplerData};
use swolca::model::check_simplex;
use swolca::postprocess::relabel;
use swolca::sim::{tiny_fixture, ScenarioSpec};
use swolca::wolca::{fit_weighted_probit, fit_wolca_step1};
use swolca::{build_design_row, normalize_weights, CodingSpec, McmcConfig, NormalizedWeights, PriorSpec};

fn short_config(seed: u64) -> McmcConfig {
    McmcConfig { n_iter: 300, n_burn: 150, thin: 3, seed, k_max: 6, ..McmcConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn design_row_has_one_active_block(k in 1usize..6, class_seed in 0usize..100, v in prop::collection::vec(0.5f64..3.0, 0..4)) {
        let class = class_seed % k;
        let coding = CodingSpec::full(k, v.len());
        let row = build_design_row(class, &v, &coding).unwrap();
        let q = 1 + v.len();
        prop_assert_eq!(row.len(), k * q);
        let nonzero: Vec<usize> = (0..row.len()).filter(|&i| row[i] != 0.0).collect();
        prop_assert_eq!(nonzero.len(), q);
        prop_assert!(nonzero.iter().all(|&i| i / q == class));
    }

    #[test]
    fn design_rows_sum_to_the_one_hot_expansion(k in 1usize..6, v in prop::collection::vec(-3.0f64..3.0, 0..4)) {
        let coding = CodingSpec::full(k, v.len());
        let mut total = vec![0.0; k * (1 + v.len())];
        for class in 0..k {
            for (t, x) in total.iter_mut().zip(build_design_row(class, &v, &coding).unwrap()) {
                *t += x;
            }
        }
        for block in total.chunks(1 + v.len()) {
            prop_assert_eq!(block[0], 1.0);
            prop_assert_eq!(&block[1..], &v[..]);
        }
    }

    #[test]
    fn weight_normalization_ignores_scale(w in prop::collection::vec(0.01f64..100.0, 1..50), c in 0.001f64..1000.0) {
        let a = normalize_weights(&w).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * c).collect();
        let b = normalize_weights(&scaled).unwrap();
        let n = w.len() as f64;
        prop_assert!((a.wtilde.iter().sum::<f64>() - n).abs() < 1e-9 * n);
        for (x, y) in a.wtilde.iter().zip(&b.wtilde) {
            prop_assert!((x - y).abs() < 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn dirichlet_draws_are_simplexes(alpha in prop::collection::vec(0.01f64..50.0, 2..30), seed in any::<u64>()) {
        let mut rng = rng_stream(seed, 0);
        let p = draw_dirichlet(&alpha, &mut rng).unwrap();
        prop_assert!(check_simplex(&p, "draw").is_ok());
    }

    #[test]
    fn truncated_normal_respects_bounds(mean in -30.0f64..30.0, seed in any::<u64>()) {
        let mut rng = rng_stream(seed, 1);
        for _ in 0..20 {
            prop_assert!(draw_truncnormal(mean, 0.0, f64::INFINITY, &mut rng).unwrap() > 0.0);
            prop_assert!(draw_truncnormal(mean, f64::NEG_INFINITY, 0.0, &mut rng).unwrap() < 0.0);
        }
    }

    #[test]
    fn streams_are_reproducible(seed in any::<u64>(), stream in 0u64..1000) {
        let a: Vec<f64> = { let mut r = rng_stream(seed, stream); (0..10).map(|_| std_normal(&mut r)).collect() };
        let b: Vec<f64> = { let mut r = rng_stream(seed, stream); (0..10).map(|_| std_normal(&mut r)).collect() };
        prop_assert_eq!(a, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn label_permutation_preserves_the_log_pseudo_posterior(seed in any::<u64>(), k in 2usize..5) {
        let ds = tiny_fixture().unwrap();
        let weights = normalize_weights(&ds.weight).unwrap();
        let data = SamplerData::new(&ds, &CodingSpec::full(1, ds.n_covariates), weights, true).unwrap();
        let prior = PriorSpec::default_for(k, 4, data.q);
        let mut rng = rng_stream(seed, 2);
        let state = GibbsState::from_prior(&data, &prior, k, &mut rng).unwrap();
        let before = log_pseudo_posterior(&state, &data, &prior);
        let after = log_pseudo_posterior(&permute_labels(&state, &mut rng), &data, &prior);
        prop_assert!(before.is_finite());
        prop_assert!((before - after).abs() < 1e-9 * before.abs().max(1.0));
    }
}

#[test]
fn doubling_weights_gives_identical_chains() {
    let ds = tiny_fixture().unwrap();
    let mut doubled = ds.clone();
    doubled.weight.iter_mut().for_each(|w| *w *= 2.0);
    let coding = CodingSpec::full(1, ds.n_covariates);
    let prior = PriorSpec::default_for(6, 4, 2);
    let run = |d: &swolca::SurveyDataset| {
        let data = SamplerData::new(d, &coding, normalize_weights(&d.weight).unwrap(), true).unwrap();
        run_two_stage(&data, &prior, &short_config(3), &mut rng_stream(3, 0)).unwrap().1.draws
    };
    assert_eq!(run(&ds), run(&doubled));
}

#[test]
fn unit_weights_match_the_unweighted_sampler() {
    let mut ds = tiny_fixture().unwrap();
    ds.weight = vec![7.5; ds.n];
    let coding = CodingSpec::full(1, ds.n_covariates);
    let prior = PriorSpec::default_for(6, 4, 2);
    let run = |w: NormalizedWeights| {
        let data = SamplerData::new(&ds, &coding, w, true).unwrap();
        run_two_stage(&data, &prior, &short_config(4), &mut rng_stream(4, 0)).unwrap().1
    };
    let weighted = run(normalize_weights(&ds.weight).unwrap());
    let unweighted = run(NormalizedWeights::unit(ds.n));
    assert_eq!(weighted.draws, unweighted.draws);
    assert_eq!(weighted.c_draws, unweighted.c_draws);
}

#[test]
fn relabeling_is_idempotent() {
    let ds = tiny_fixture().unwrap();
    let coding = CodingSpec::full(1, ds.n_covariates);
    let data = SamplerData::new(&ds, &coding, normalize_weights(&ds.weight).unwrap(), true).unwrap();
    let prior = PriorSpec::default_for(6, 4, 2);
    let (adaptive, chain) = run_two_stage(&data, &prior, &short_config(5), &mut rng_stream(5, 0)).unwrap();
    let once = relabel(&chain, adaptive.k_hat).unwrap();
    let twice = relabel(&once.chain, adaptive.k_hat).unwrap();
    for perm in &twice.permutations {
        assert!(perm.iter().enumerate().all(|(a, &b)| a == b), "{perm:?}");
    }
    assert_eq!(twice.chain.draws, once.chain.draws);
}

#[test]
fn two_step_first_stage_ignores_the_outcome() {
    let ds = tiny_fixture().unwrap();
    let flipped = ds.with_outcome(ds.outcome.iter().map(|y| 1 - y).collect());
    let prior = PriorSpec::default_for(6, 4, 0);
    let a = fit_wolca_step1(&ds, &prior, &short_config(6), &mut rng_stream(6, 0)).unwrap();
    let b = fit_wolca_step1(&flipped, &prior, &short_config(6), &mut rng_stream(6, 0)).unwrap();
    assert_eq!(a.adaptive, b.adaptive);
    assert_eq!(a.relabeled.chain.draws, b.relabeled.chain.draws);
    assert_eq!(a.relabeled.chain.c_draws, b.relabeled.chain.c_draws);
    assert_eq!(a.modal_class, b.modal_class);
}

#[test]
fn probit_variance_is_psd_and_intervals_symmetric() {
    let ds = tiny_fixture().unwrap();
    let classes: Vec<usize> = (0..ds.n).map(|i| (ds.items[i * ds.n_items] >= 3) as usize).collect();
    let fit = fit_weighted_probit(&ds, &CodingSpec::full(2, ds.n_covariates), &classes).unwrap();
    let p = fit.coef.len();
    let cov = nalgebra::DMatrix::from_row_slice(p, p, &fit.cov);
    let eig = cov.symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&e| e > -1e-12), "{:?}", eig.eigenvalues);
    for a in 0..p {
        let (lo, hi) = (fit.coef[a] - fit.lower[a], fit.upper[a] - fit.coef[a]);
        assert!((lo - hi).abs() < 1e-12);
    }
    assert!(fit.gradient_norm < 1e-8);
}

#[test]
fn samples_reproduce_and_weights_total_the_population() {
    for id in [1u8, 2, 3] {
        let spec = ScenarioSpec { n: 800, ..ScenarioSpec::preset(id).unwrap() };
        let pop = spec.population().unwrap();
        let a = spec.sample(&pop, 1).unwrap();
        let total: f64 = a.dataset.weight.iter().sum();
        assert!((total - 80_000.0).abs() < 1e-6 * 80_000.0, "scenario {id}: {total}");
        assert_eq!(a, spec.sample(&pop, 1).unwrap());
    }
}
