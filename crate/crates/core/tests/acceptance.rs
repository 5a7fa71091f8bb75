//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netlim::harness::{
    compare_quenched_to_averaged, exceedance_fractions, run_averaged_convergence, run_ergodic_path, run_quenched_convergence,
    ErgodicPlan, ExceedancePlan, Experiment, ExperimentPlan, Metric, TestFunction, SLOPE_RANGE,
};
use netlim::limit_law::{
    apply_q, assemble_k, mc_moment_oracle, moment_cross, solve_limit_law, window_covariance, Integrator,
    LimitLaw, OracleTarget,
};
use netlim::model::{psi_forward, psi_inverse, psi_inverse_coeffs};
use netlim::network::{empirical_stats, sample_weights, simulate, weight_moments, SimConfig, WeightMethod};
use netlim::stats::{ks_p_value, ks_statistic_normal};
use netlim::{CovFunction, InitialLaw, ModelParams, QuadratureConfig, SigmoidSpec};

/// Master seed for every stochastic criterion, fixed before any run.
const SEED: u64 = 20_261_018;

fn c1(horizon_t: usize) -> ModelParams {
    ModelParams {
        gamma: 0.5,
        sigma2: 1.0,
        theta_bar: 0.0,
        theta2: 0.0,
        j_bar: 1.0,
        lambda: CovFunction::separable(&[0.1, 0.2, 0.1]).unwrap(),
        f: SigmoidSpec::logistic(1.0),
        mu_init: InitialLaw::PointMass { u0: 0.0 },
        horizon_t,
    }
}

fn solve(p: &ModelParams) -> LimitLaw {
    solve_limit_law(p, &QuadratureConfig::default()).expect("limit law")
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn bijection() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut round_trip: f64 = 0.0;
    let mut coeff: f64 = 0.0;
    for i in 0..10_000 {
        let gamma = [0.0, 0.5, 0.99][i % 3];
        let theta_bar = rng.random_range(-2.0..2.0);
        let len = rng.random_range(1..=11);
        let u: Vec<f64> = (0..len).map(|_| rng.random_range(-1e3..1e3)).collect();
        let v = psi_forward(&u, gamma, theta_bar);
        let back = psi_inverse(&v, gamma, theta_bar);
        for (a, b) in u.iter().zip(&back) {
            round_trip = round_trip.max((a - b).abs());
        }
        let w: Vec<f64> = (0..len).map(|_| rng.random_range(-10.0..10.0)).collect();
        let inv = psi_inverse(&w, gamma, theta_bar);
        // Step-by-step recursion, independent of the closed form.
        let mut prev = w[0];
        for t in 0..len {
            if t > 0 {
                prev = gamma * prev + w[t] + theta_bar;
            }
            let (a, b) = psi_inverse_coeffs(t, gamma, theta_bar);
            let lin: f64 = a.iter().zip(&w).map(|(a, v)| a * v).sum::<f64>() + b;
            coeff = coeff.max((lin - inv[t]).abs()).max((prev - inv[t]).abs());
        }
    }
    verdict(
        round_trip <= 1e-12 && coeff <= 1e-12,
        format!("max round-trip error {round_trip:.2e}, max coefficient/recursion error {coeff:.2e} (limit 1e-12)"),
    )
}

fn decoupled() -> Verdict {
    let p = ModelParams::decoupled(0.5, 1.0, 0.3, 3);
    let law = solve(&p);
    let zero = law.mean_vector().iter().all(|&c| c == 0.0)
        && (0..=law.d()).all(|k| law.k_block(k as i64).iter().all(|&x| x == 0.0));
    let n = 500;
    let sim = SimConfig::new(n, SEED);
    let ens = simulate(&p, &sim, &sample_weights(&p, &sim).unwrap()).unwrap();
    let stats = empirical_stats(&ens, &p, 1).unwrap();
    let p_values: Vec<f64> = stats
        .pools
        .iter()
        .map(|pool| ks_p_value(ks_statistic_normal(pool, 0.0, p.sigma2), pool.len() as f64))
        .collect();
    let envelope = 4.0 * p.sigma2 / ((2 * n + 1) as f64).sqrt();
    let lag1 = stats.k_hat[1].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let ks_ok = p_values.iter().all(|&pv| pv >= 0.01);
    verdict(
        zero && ks_ok && lag1 <= envelope,
        format!(
            "solver exactly zero: {zero}; KS p-values {:?}; max |lag-1 cov| {lag1:.4} vs envelope {envelope:.4}",
            p_values.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let law = solve(&c1(5));
    let t = law.horizon();
    let mut targets: Vec<(OracleTarget, f64)> = (1..=t).map(|s| (OracleTarget::Mean { s }, law.c(s))).collect();
    for r in 1..=t {
        for s in r..=t {
            targets.push((OracleTarget::Same { r, s }, law.m(0, r, s).unwrap()));
        }
    }
    for lag in 1..=law.moment_lag_radius() as i64 {
        for r in 1..=t {
            for s in 1..=t {
                targets.push((OracleTarget::Cross { lag, r, s }, law.m(lag, r, s).unwrap()));
            }
        }
    }
    let mut worst: f64 = 0.0;
    let mut beyond3 = Vec::new();
    for (i, (target, value)) in targets.iter().enumerate() {
        let est = mc_moment_oracle(&law, *target, 1_000_000, SEED + i as u64).unwrap();
        let z = est.z_score(*value).abs();
        worst = worst.max(z);
        if z > 3.0 {
            beyond3.push(format!("{target} z={z:.2}"));
        }
    }
    verdict(
        beyond3.is_empty() && worst <= 5.0,
        format!("{} entries, max |z| {worst:.2}; beyond 3: {:?}", targets.len(), beyond3),
    )
}

fn fixed_point() -> Verdict {
    let law = solve(&c1(5));
    let image = apply_q(&law, &QuadratureConfig::with_nodes(32)).unwrap();
    let dist = law.sup_distance(&image);
    verdict(dist <= 1e-6, format!("sup |Q(mu) - mu| = {dist:.2e} (limit 1e-6)"))
}

fn structural() -> Verdict {
    let p = c1(5);
    let law = solve(&p);
    let integ = Integrator::new(&p, &QuadratureConfig::default()).unwrap();
    let t = law.horizon();
    let d = law.d() as i64;
    let mut symmetry: f64 = 0.0;
    for l in 1..=d {
        for r in 1..=t {
            for s in 1..=t {
                // K^{-l}_{s,r} assembled from directly integrated moments.
                let k_neg = assemble_k(&p.lambda, p.theta2, -l, s, r, |lag| {
                    if lag == 0 {
                        law.m(0, s, r)
                    } else {
                        moment_cross(&law, lag, s, r, &integ).ok()
                    }
                })
                .unwrap();
                symmetry = symmetry.max((k_neg - law.k(l, r, s)).abs());
                symmetry = symmetry.max((law.k(-l, s, r) - law.k(l, r, s)).abs());
            }
        }
    }
    let sparse = (d + 1..=d + 3).all(|k| {
        law.k_block(k).iter().all(|&x| x == 0.0)
            && law.k_block(-k).iter().all(|&x| x == 0.0)
            && assemble_k(&p.lambda, p.theta2, k, 1, 1, |_| Some(0.5)).unwrap() == 0.0
    });
    let window = window_covariance(&law, 2 * law.d() + 2).unwrap();
    let moments_ok = (0..=law.moment_lag_radius())
        .all(|l| law.m_block(l).unwrap().iter().all(|&x| x > 0.0 && x < 1.0));
    verdict(
        symmetry <= 1e-12 && sparse && window.min_eigenvalue >= -1e-8 && moments_ok,
        format!(
            "max symmetry defect {symmetry:.2e}; beyond-d blocks exactly zero: {sparse}; window (m={}) min eigenvalue {:.3e}; M in (0,1): {moments_ok}",
            2 * law.d() + 2,
            window.min_eigenvalue
        ),
    )
}

fn node_convergence() -> Verdict {
    let p = c1(5);
    let a = solve_limit_law(&p, &QuadratureConfig::with_nodes(32)).unwrap();
    let b = solve_limit_law(&p, &QuadratureConfig::with_nodes(64)).unwrap();
    let dist = a.sup_distance_all(&b);
    verdict(dist <= 1e-8, format!("max change 32 -> 64 nodes {dist:.2e} (limit 1e-8)"))
}

fn weight_sampler() -> Verdict {
    let p = c1(2);
    let fft = weight_moments(&p, 4, WeightMethod::FftTorus, 10_000, SEED).unwrap();
    let direct = weight_moments(&p, 4, WeightMethod::DirectFactorization, 10_000, SEED + 1).unwrap();
    let (zf, zd, zx) = (fft.max_abs_z(), direct.max_abs_z(), fft.max_abs_z_between(&direct));
    verdict(
        zf <= 4.0 && zd <= 4.0 && zx <= 4.0,
        format!("81 lags + mean: max |z| fft {zf:.2}, direct {zd:.2}, fft vs direct {zx:.2} (limit 4)"),
    )
}

fn averaged() -> Verdict {
    let law = solve(&c1(5));
    let mut plan = ExperimentPlan::new(Experiment::Averaged, vec![25, 50, 100, 200], 20, SEED);
    plan.metrics = vec![Metric::Mean, Metric::Covariance, Metric::Ks];
    let report = run_averaged_convergence(&plan, &law).unwrap();
    let find = |name: &str| report.checks.iter().find(|c| c.name == name).unwrap();
    let (dec, slope) = (find("median_mean_error_decreasing"), find("mean_error_slope"));
    verdict(
        dec.passed && slope.passed,
        format!("{}; {} (range {:?})", dec.detail, slope.detail, SLOPE_RANGE),
    )
}

fn quenched() -> Verdict {
    let law = solve(&c1(5));
    let mut plan = ExperimentPlan::new(Experiment::Quenched, vec![400], 20, SEED);
    plan.metrics = vec![Metric::Mean, Metric::Covariance];
    plan.exceedance = Some(ExceedancePlan {
        n_list: vec![25, 50, 100],
        draws: 200,
        factor: 1.0,
        anchor_n: Some(100),
    });
    let q = run_quenched_convergence(&plan, &law).unwrap();
    let mut avg_plan = plan.clone();
    avg_plan.experiment = Experiment::Averaged;
    avg_plan.exceedance = None;
    let a = run_averaged_convergence(&avg_plan, &law).unwrap();
    let cmp = compare_quenched_to_averaged(&q, &a, 3.0);
    let ex = q.checks.iter().find(|c| c.name == "exceedance_decreasing").unwrap();
    // The same draws measured against five times the anchor median, for reference.
    let mut wide_plan = plan.exceedance.clone().unwrap();
    wide_plan.factor = 5.0;
    let wide: Vec<f64> = exceedance_fractions(&plan, &wide_plan, &law)
        .unwrap()
        .iter()
        .map(|r| r.fraction)
        .collect();
    verdict(
        cmp.passed && ex.passed,
        format!("{}; exceedance at 1x median(n=100): {}; at 5x: {wide:?}", cmp.detail, ex.detail),
    )
}

fn ergodic() -> Verdict {
    let law = solve(&c1(5));
    let erg = ErgodicPlan {
        h: TestFunction::RateProduct {
            offsets: vec![0, 1],
            time: None,
        },
        m: Some(1),
    };
    let mut plan = ExperimentPlan::new(Experiment::Ergodic, vec![50, 200, 800], 1, SEED);
    plan.ergodic = Some(erg.clone());
    plan.limit_samples = 1_000_000;
    let report = run_ergodic_path(&plan, &law, &erg).unwrap();
    let dec = report.checks.iter().find(|c| c.name == "ergodic_gap_decreasing").unwrap();
    let within = report.checks.iter().find(|c| c.name == "ergodic_gap_within_4se").unwrap();
    verdict(dec.passed && within.passed, format!("{}; {}", dec.detail, within.detail))
}

fn run_cli(config: &Path, out: &Path, command: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_netlim"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--command", command, "--seed", &SEED.to_string(), "--threads", "4"])
        .env_remove("NETLIM_SEED")
        .env_remove("NETLIM_THREADS")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "model": c1(5),
        "sim": {"n": 50, "seed": 0, "weight_method": "fft-torus"},
    });
    let cfg_path = dir.path().join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let runs = [dir.path().join("run1"), dir.path().join("run2")];
    let mut ok = true;
    for out in &runs {
        ok &= run_cli(&cfg_path, out, "limit");
        ok &= run_cli(&cfg_path, out, "simulate");
    }
    let files = ["limit_law.json", "weights.csv", "ensemble.bin", "empirical_stats.json"];
    let identical: Vec<bool> = files
        .iter()
        .map(|f| match (fs::read(runs[0].join(f)), fs::read(runs[1].join(f))) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        })
        .collect();
    verdict(
        ok && identical.iter().all(|&x| x),
        format!("commands succeeded: {ok}; byte-identical {:?}", files.iter().zip(&identical).collect::<Vec<_>>()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("bijection", bijection),
        ("decoupled analytic case", decoupled),
        ("quadrature/oracle equivalence", oracle_equivalence),
        ("fixed point", fixed_point),
        ("structural invariants", structural),
        ("quadrature convergence", node_convergence),
        ("weight-sampler moments", weight_sampler),
        ("averaged convergence", averaged),
        ("quenched convergence", quenched),
        ("ergodic single path", ergodic),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut err = std::io::stderr();
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = check();
        if !v.passed {
            failed += 1;
        }
        let status = if v.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(
            err,
            "acceptance {:>2} [{status}] {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        );
    }
    let _ = writeln!(err, "acceptance: {failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
