use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::test_configs::c1;
use super::*;
use crate::model::{CovFunction, InitialLaw, ModelParams};
use crate::quadrature::QuadratureConfig;
use crate::stats::RunningMoments;
use crate::window::Window;

fn q() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn solved(p: &ModelParams) -> LimitLaw {
    solve_limit_law(p, &q()).unwrap()
}

fn integ(p: &ModelParams) -> Integrator {
    Integrator::new(p, &q()).unwrap()
}

/// A config exercising every term: input variance, Gaussian μ_I, nonzero θ̄, d = 1.
fn rich(horizon_t: usize) -> ModelParams {
    ModelParams {
        gamma: 0.3,
        sigma2: 0.6,
        theta_bar: -0.4,
        theta2: 0.15,
        j_bar: 1.5,
        lambda: CovFunction::separable(&[0.2, 0.5, 0.2]).unwrap(),
        f: crate::SigmoidSpec::logistic(2.0),
        mu_init: InitialLaw::Gaussian {
            mean: 0.5,
            variance: 0.4,
        },
        horizon_t,
    }
}

fn within(est: OracleEstimate, value: f64, k: f64) -> bool {
    est.z_score(value).abs() <= k
}

#[test]
fn decoupled_law_is_exactly_zero() {
    let p = ModelParams::decoupled(0.4, 1.3, 0.7, 4);
    let law = solved(&p);
    assert!(law.mean_vector().iter().all(|&c| c == 0.0));
    assert!((0..=law.d()).all(|k| law.k_block(k as i64).iter().all(|&x| x == 0.0)));
}

#[test]
fn c1_first_step_by_hand() {
    let law = solved(&c1(3));
    assert_eq!(law.c(1), 0.5);
    assert!((law.k(0, 1, 1) - 0.02).abs() < 1e-15);
    assert!((law.k(1, 1, 1) - 0.01).abs() < 1e-15);
    for lag in 0..=1 {
        assert_eq!(law.m(lag, 1, 1), Some(0.25));
    }
}

#[test]
fn c1_second_mean_against_scalar_monte_carlo() {
    let law = solved(&c1(2));
    let normal = Normal::new(0.5, 1.02f64.sqrt()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let f = law.params().f;
    let mut acc = RunningMoments::default();
    for _ in 0..1_000_000 {
        acc.push(f.eval(normal.sample(&mut rng)));
    }
    let z = (law.c(2) - acc.mean) / acc.std_error();
    assert!(z.abs() <= 3.0, "z = {z}");
}

#[test]
fn quadrature_agrees_with_oracle_on_c1() {
    let law = solved(&c1(3));
    let n = 1_000_000;
    let checks = [
        (OracleTarget::Mean { s: 3 }, law.c(3)),
        (OracleTarget::Same { r: 1, s: 2 }, law.m(0, 1, 2).unwrap()),
        (OracleTarget::Same { r: 3, s: 3 }, law.m(0, 3, 3).unwrap()),
        (OracleTarget::Cross { lag: 1, r: 2, s: 2 }, law.m(1, 2, 2).unwrap()),
        (OracleTarget::Cross { lag: 1, r: 3, s: 1 }, law.m(1, 3, 1).unwrap()),
    ];
    for (i, (target, value)) in checks.into_iter().enumerate() {
        let est = mc_moment_oracle(&law, target, n, 100 + i as u64).unwrap();
        assert!(within(est, value, 3.0), "{target}: {value} vs {est:?}");
    }
}

#[test]
fn quadrature_agrees_with_oracle_on_rich_config() {
    let law = solved(&rich(3));
    let n = 1_000_000;
    let mut worst: f64 = 0.0;
    for s in 1..=3 {
        let est = mc_moment_oracle(&law, OracleTarget::Mean { s }, n, s as u64).unwrap();
        worst = worst.max(est.z_score(law.c(s)).abs());
    }
    for (lag, r, s) in [(0, 2, 3), (0, 3, 3), (1, 3, 2), (1, 2, 3), (-1, 3, 3)] {
        let target = if lag == 0 {
            OracleTarget::Same { r, s }
        } else {
            OracleTarget::Cross { lag, r, s }
        };
        let est = mc_moment_oracle(&law, target, n, 40 + r as u64 * 7 + s as u64).unwrap();
        worst = worst.max(est.z_score(law.m(lag, r, s).unwrap()).abs());
    }
    assert!(worst <= 4.0, "max |z| = {worst}");
}

#[test]
fn mean_entry_edge_cases() {
    let p = c1(3);
    let law = solved(&p);
    assert_eq!(mean_entry(&law, 1, &integ(&p)).unwrap(), 0.5);
    let zero = ModelParams { j_bar: 0.0, ..c1(3) };
    let law0 = solved(&zero);
    assert!(law0.mean_vector().iter().all(|&c| c == 0.0));
    assert!(mean_entry(&law, 4, &integ(&p)).is_err());
}

#[test]
fn second_moment_bounds() {
    let p = rich(4);
    let law = solved(&p);
    let it = integ(&p);
    for r in 1..=4 {
        let m = moment_same(&law, r, r, &it).unwrap();
        let mean_f = mean_entry(&law, r, &it).unwrap() / p.j_bar;
        assert!(m > 0.0 && m < 1.0);
        assert!(m >= mean_f * mean_f - 1e-12);
    }
    for lag in 0..=law.moment_lag_radius() {
        let block = law.m_block(lag).unwrap();
        assert!(block.iter().all(|&x| x > 0.0 && x < 1.0));
    }
    let m0 = law.m_block(0).unwrap();
    assert_eq!(m0, &m0.transpose());
    assert!(law.mean_vector().iter().all(|c| c.abs() <= p.j_bar.abs()));
}

#[test]
fn input_variance_alone_gives_constant_k0() {
    let p = ModelParams {
        theta2: 0.3,
        ..ModelParams::decoupled(0.5, 1.0, 0.0, 3)
    };
    let law = solved(&p);
    assert!(law.k_block(0).iter().all(|&x| x == 0.3));
    assert!(law.mean_vector().iter().all(|&c| c == 0.0));
}

#[test]
fn uncorrelated_pair_factorizes() {
    let p = rich(3);
    let base = solved(&p);
    let mut k = vec![base.k_block(0), DMatrix::zeros(3, 3)];
    k[0] = k[0].clone();
    let nu = LimitLaw::from_parts(p.clone(), base.mean_vector().to_vec(), k).unwrap();
    let it = integ(&p);
    for r in 1..=3 {
        for s in 1..=3 {
            let m = moment_cross(&nu, 1, r, s, &it).unwrap();
            let fr = mean_entry(&nu, r, &it).unwrap() / p.j_bar;
            let fs = mean_entry(&nu, s, &it).unwrap() / p.j_bar;
            assert!((m - fr * fs).abs() < 1e-12, "({r},{s}): {m} vs {}", fr * fs);
        }
    }
    assert!(moment_cross(&nu, 0, 1, 1, &it).is_err());
}

#[test]
fn assemble_k_examples() {
    let zero = CovFunction::zero();
    for (r, s) in [(1, 1), (2, 5)] {
        assert_eq!(assemble_k(&zero, 0.3, 0, r, s, |_| Some(0.9)).unwrap(), 0.3);
    }
    let lambda = CovFunction::separable(&[0.1, 0.2, 0.1]).unwrap();
    assert_eq!(assemble_k(&lambda, 0.0, 2, 1, 1, |_| Some(0.5)).unwrap(), 0.0);
    let k = assemble_k(&lambda, 0.0, 0, 1, 1, |_| Some(0.25)).unwrap();
    assert!((k - 0.02).abs() < 1e-16);
    assert!(matches!(
        assemble_k(&lambda, 0.0, 0, 1, 1, |l| (l != 1).then_some(0.25)),
        Err(Error::MissingMoment { lag: 1, .. })
    ));
}

#[test]
fn negative_lag_symmetry_against_direct_quadrature() {
    let p = rich(4);
    let law = solved(&p);
    let it = integ(&p);
    for r in 1..=4 {
        for s in 1..=4 {
            // M^{-1}_{s,r} integrated directly on the lag -1 pair marginal.
            let direct = moment_cross(&law, -1, s, r, &it).unwrap();
            assert!((direct - law.m(1, r, s).unwrap()).abs() < 1e-12);
            let k_neg = assemble_k(&p.lambda, p.theta2, -1, s, r, |l| {
                if l == 0 {
                    law.m(0, s, r)
                } else {
                    Some(moment_cross(&law, l, s, r, &it).unwrap())
                }
            })
            .unwrap();
            assert!((k_neg - law.k(1, r, s)).abs() < 1e-12);
            assert!((law.k(0, r, s) - law.k(0, s, r)).abs() < 1e-12);
        }
    }
}

#[test]
fn sparsity_beyond_correlation_distance() {
    let law = solved(&rich(3));
    for lag in [2i64, -2, 5] {
        assert!(law.k_block(lag).iter().all(|&x| x == 0.0));
    }
}

#[test]
fn single_marginal_examples() {
    let law = solved(&c1(3));
    let m0 = single_marginal(&law, 0).unwrap();
    assert_eq!(m0.dim(), 0);
    assert_eq!(m0.init, vec![InitialLaw::PointMass { u0: 0.0 }]);
    let m1 = single_marginal(&law, 1).unwrap();
    assert_eq!(m1.mean[0], 0.5);
    assert!((m1.cov[(0, 0)] - 1.02).abs() < 1e-15);
    let m2 = single_marginal(&law, 2).unwrap();
    let m3 = single_marginal(&law, 3).unwrap();
    assert_eq!(m3.cov.view((0, 0), (2, 2)), m2.cov);
    assert!(single_marginal(&solved(&c1(2)), 3).is_err());
}

#[test]
fn pair_marginal_examples() {
    let law = solved(&c1(3));
    let pm = pair_marginal(&law, 1, 1, 1).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[1.02, 0.01, 0.01, 1.02]);
    assert!((&pm.cov - expected).abs().max() < 1e-15);

    // Swapping the lag sign swaps the blocks and transposes the cross block.
    let a = pair_marginal(&law, 1, 3, 2).unwrap();
    let b = pair_marginal(&law, -1, 2, 3).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let (bi, bj) = (swap(i), swap(j));
            assert!((a.cov[(i, j)] - b.cov[(bi, bj)]).abs() < 1e-15);
        }
    }
    fn swap(i: usize) -> usize {
        if i < 3 {
            i + 2
        } else {
            i - 3
        }
    }

    // Without cross covariance the pair is the product of two single marginals.
    let p = c1(3);
    let nu = LimitLaw::from_parts(p, law.mean_vector().to_vec(), vec![law.k_block(0), DMatrix::zeros(3, 3)]).unwrap();
    let pm = pair_marginal(&nu, 1, 2, 3).unwrap();
    let s2 = single_marginal(&nu, 2).unwrap();
    let s3 = single_marginal(&nu, 3).unwrap();
    assert_eq!(pm.cov.view((0, 0), (2, 2)), s2.cov);
    assert_eq!(pm.cov.view((2, 2), (3, 3)), s3.cov);
    assert!(pm.cov.view((0, 2), (2, 3)).iter().all(|&x| x == 0.0));
}

#[test]
fn limit_law_is_a_fixed_point_of_q() {
    for p in [c1(5), rich(4)] {
        let law = solved(&p);
        let image = apply_q(&law, &q()).unwrap();
        assert!(law.sup_distance_all(&image) <= 1e-12, "{}", law.sup_distance_all(&image));
    }
}

#[test]
fn q_of_decoupled_zero_law_is_zero() {
    let p = ModelParams::decoupled(0.5, 1.0, 0.0, 3);
    let nu = LimitLaw::from_parts(p, vec![0.0; 3], vec![DMatrix::zeros(3, 3)]).unwrap();
    let out = apply_q(&nu, &q()).unwrap();
    assert!(out.mean_vector().iter().all(|&c| c == 0.0));
    assert!(out.k_block(0).iter().all(|&x| x == 0.0));
}

#[test]
fn q_of_perturbed_law_matches_oracle() {
    let law = solved(&c1(3));
    let nu = law.with_mean_shift(0.1);
    let image = apply_q(&nu, &q()).unwrap();
    assert!((image.c(2) - law.c(2)).abs() > 1e-3);
    let n = 1_000_000;
    for s in 2..=3 {
        let est = mc_moment_oracle(&nu, OracleTarget::Mean { s }, n, 70 + s as u64).unwrap();
        assert!(within(est, image.c(s), 3.0), "c_{s}: {} vs {est:?}", image.c(s));
    }
    let est = mc_moment_oracle(&nu, OracleTarget::Cross { lag: 1, r: 3, s: 2 }, n, 77).unwrap();
    assert!(within(est, image.m(1, 3, 2).unwrap(), 3.0));
}

#[test]
fn oracle_degenerate_cases() {
    let law = solved(&c1(3));
    let one = mc_oracle_with(&law, OracleTarget::Same { r: 3, s: 2 }, 1000, 1, &|_| 1.0).unwrap();
    assert_eq!(one.estimate, 1.0);
    assert_eq!(one.stderr, 0.0);
    let first = mc_moment_oracle(&law, OracleTarget::Same { r: 1, s: 1 }, 1000, 1).unwrap();
    assert_eq!(first.estimate, 0.25);
    assert_eq!(first.stderr, 0.0);
    assert!(matches!(
        mc_moment_oracle(&law, OracleTarget::Mean { s: 2 }, 50, 1),
        Err(Error::TooFewSamples(50))
    ));
    let a = mc_moment_oracle(&law, OracleTarget::Mean { s: 3 }, 5000, 9).unwrap();
    let b = mc_moment_oracle(&law, OracleTarget::Mean { s: 3 }, 5000, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn quadrature_converges_in_node_count() {
    let p = c1(4);
    let a = solve_limit_law(&p, &QuadratureConfig::with_nodes(32)).unwrap();
    let b = solve_limit_law(&p, &QuadratureConfig::with_nodes(64)).unwrap();
    assert!(a.sup_distance_all(&b) <= 1e-8, "{}", a.sup_distance_all(&b));

    // A steeper sigmoid converges more slowly but still monotonically.
    let p = rich(3);
    let [a, b, c] = [24, 48, 96].map(|n| solve_limit_law(&p, &QuadratureConfig::with_nodes(n)).unwrap());
    let (coarse, fine) = (a.sup_distance_all(&c), b.sup_distance_all(&c));
    assert!(fine < coarse && fine <= 1e-5, "{coarse} {fine}");
}

#[test]
fn discrete_initial_law_matches_oracle() {
    let p = ModelParams {
        mu_init: InitialLaw::Discrete {
            atoms: vec![-1.0, 0.5, 2.0],
            weights: vec![0.2, 0.5, 0.3],
        },
        ..rich(3)
    };
    let law = solved(&p);
    let n = 1_000_000;
    for (i, (target, value)) in [
        (OracleTarget::Mean { s: 1 }, law.c(1)),
        (OracleTarget::Same { r: 1, s: 3 }, law.m(0, 1, 3).unwrap()),
        (OracleTarget::Cross { lag: 1, r: 1, s: 2 }, law.m(1, 1, 2).unwrap()),
    ]
    .into_iter()
    .enumerate()
    {
        let est = mc_moment_oracle(&law, target, n, 500 + i as u64).unwrap();
        assert!(within(est, value, 4.0), "{target}: {value} vs {est:?}");
    }
}

#[test]
fn window_covariance_examples() {
    let law = solved(&c1(3));
    let w0 = window_covariance(&law, 0).unwrap();
    let single = single_marginal(&law, 3).unwrap();
    assert!((&w0.cov - &single.cov).abs().max() < 1e-15);

    let w2 = window_covariance(&law, 2).unwrap();
    assert!(w2.min_eigenvalue >= -1e-8);
    assert_eq!(w2.cov.nrows(), 15);
    // Block (0, 1) is K^1 and block (1, 0) is K^{-1}.
    assert!((w2.cov.view((0, 3), (3, 3)) - law.k_block(1)).abs().max() < 1e-15);
    assert!((w2.cov.view((3, 0), (3, 3)) - law.k_block(-1)).abs().max() < 1e-15);

    let flat = ModelParams {
        lambda: CovFunction::new(0, vec![0.3]).unwrap(),
        ..c1(3)
    };
    let wf = window_covariance(&solved(&flat), 2).unwrap();
    assert!(wf.cov.view((0, 3), (3, 12)).iter().all(|&x| x == 0.0));
}

#[test]
fn decoupled_samples_are_ar1_paths() {
    let p = ModelParams::decoupled(0.6, 0.8, 0.25, 3);
    let law = solved(&p);
    let samples = sample_limit_law(&law, 1, 20_000, 3).unwrap();
    let mut acc: Vec<RunningMoments> = vec![RunningMoments::default(); 3];
    let mut cross = RunningMoments::default();
    for w in &samples {
        assert_eq!(w.get(0, 0), 0.0);
        for t in 1..=3 {
            let innovation = w.get(0, t) - 0.6 * w.get(0, t - 1) - 0.25;
            acc[t - 1].push(innovation);
        }
        cross.push((w.get(0, 2) - 0.6 * w.get(0, 1) - 0.25) * (w.get(1, 2) - 0.6 * w.get(1, 1) - 0.25));
    }
    for a in &acc {
        assert!(a.mean.abs() < 4.0 * a.std_error());
        assert!((a.variance() - 0.8).abs() < 4.0 * 0.8 * (2.0f64 / 20_000.0).sqrt());
    }
    assert!(cross.mean.abs() < 4.0 * cross.std_error());
}

#[test]
fn sampler_reproduces_mean_and_lag_covariance() {
    let p = rich(3);
    let law = solved(&p);
    let n = 100_000;
    let samples = sample_limit_law(&law, 1, n, 11).unwrap();
    assert_eq!(samples.len(), n);
    let v = |w: &Window, o: i64| crate::model::psi_forward(w.trajectory(o), p.gamma, p.theta_bar);
    let vs: Vec<[Vec<f64>; 2]> = samples.iter().map(|w| [v(w, 0), v(w, 1)]).collect();
    for s in 1..=3 {
        let mut acc = RunningMoments::default();
        vs.iter().for_each(|x| acc.push(x[0][s]));
        assert!((acc.mean - law.c(s)).abs() <= 4.0 * acc.std_error(), "c_{s}");
    }
    for r in 1..=3 {
        for s in 1..=3 {
            let mut acc = RunningMoments::default();
            vs.iter()
                .for_each(|x| acc.push((x[0][r] - law.c(r)) * (x[1][s] - law.c(s))));
            let k = law.k(1, r, s);
            assert!((acc.mean - k).abs() <= 4.0 * acc.std_error(), "K^1_({r},{s})");
        }
    }
}

#[test]
fn json_round_trip() {
    let law = solved(&rich(3));
    let text = law.to_json().unwrap();
    assert!(text.contains("\"version\": \"limitlaw-v1\""));
    let back = LimitLaw::from_json(&text).unwrap();
    assert_eq!(back, law);
    let bad = text.replace("limitlaw-v1", "limitlaw-v0");
    assert!(LimitLaw::from_json(&bad).is_err());
}

#[test]
fn solver_is_deterministic_across_thread_counts() {
    let p = rich(4);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| solved(&p));
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(|| solved(&p));
    assert_eq!(one, many);
}
