use rayon::prelude::*;

use crate::error::Result;
use crate::harness::plan::{ErgodicPlan, ExceedancePlan, Experiment, ExperimentPlan, Metric};
use crate::harness::report::{
    distance_report, Check, DistanceRecord, DistanceReport, ErgodicRecord, ExceedanceRecord,
    LimitValue,
};
use crate::limit_law::{limit_expectation, LimitLaw};
use crate::network::{
    empirical_stats, sample_weights, simulate, window_values, SimConfig, TrajectoryEnsemble,
    WeightField,
};
use crate::rng::derive_seed;
use crate::stats::{median, slope};

const QUENCHED_SALT: u64 = 0x5155_454e_4348_4544;
const EXCEEDANCE_SALT: u64 = 0x4558_4345_4544_414e;
const LIMIT_SALT: u64 = 0x4c49_4d49_5445_5850;

/// Accepted range of the log-log slope of median mean error against `2n+1`.
pub const SLOPE_RANGE: (f64, f64) = (-0.75, -0.25);

/// Seed of trial `trial` at size `n`.
pub fn trial_seed(master: u64, n: usize, trial: u64) -> u64 {
    derive_seed(derive_seed(master, n as u64), trial)
}

/// Seed of the single weight field used for every trial of a quenched run at size `n`.
pub fn quenched_weight_seed(master: u64, n: usize) -> u64 {
    trial_seed(master ^ QUENCHED_SALT, n, 0)
}

/// `4σ²/√(2n+1)`, the fluctuation envelope of i.i.d. neurons.
pub fn clt_envelope(sigma2: f64, n: usize) -> f64 {
    4.0 * sigma2 / ((2 * n + 1) as f64).sqrt()
}

fn sim_config(plan: &ExperimentPlan, n: usize, seed: u64) -> SimConfig {
    SimConfig {
        n,
        seed,
        weight_method: plan.weight_method,
    }
}

fn realize(
    law: &LimitLaw,
    plan: &ExperimentPlan,
    n: usize,
    weights: Option<&WeightField>,
    seed: u64,
) -> Result<TrajectoryEnsemble> {
    let p = law.params();
    let sim = sim_config(plan, n, seed);
    match weights {
        Some(j) => simulate(p, &sim, j),
        None => simulate(p, &sim, &sample_weights(p, &sim)?),
    }
}

fn record_for(
    law: &LimitLaw,
    plan: &ExperimentPlan,
    ens: &TrajectoryEnsemble,
    trial: u64,
    limit_values: &[LimitValue],
) -> Result<DistanceRecord> {
    let p = law.params();
    let n = ens.n();
    let stats = empirical_stats(ens, p, plan.k_max(p))?;
    let mut rec = distance_report(&stats, law, n)?;
    rec.trial = trial;
    if !plan.wants(Metric::Mean) {
        rec.mean_error = None;
    }
    if !plan.wants(Metric::Covariance) {
        rec.cov_errors.clear();
    }
    if !plan.wants(Metric::Ks) {
        rec.ks.clear();
    }
    if plan.wants(Metric::TestFunctions) {
        for (h, limit) in plan.test_functions.iter().zip(limit_values) {
            let values = window_values(ens, &h.bind(p.f), h.radius())?;
            let empirical = values.iter().sum::<f64>() / values.len() as f64;
            rec.test_gaps.push((empirical - limit.estimate).abs());
        }
    }
    Ok(rec)
}

fn limit_values(law: &LimitLaw, plan: &ExperimentPlan) -> Result<Vec<LimitValue>> {
    if !plan.wants(Metric::TestFunctions) {
        return Ok(Vec::new());
    }
    let f = law.params().f;
    plan.test_functions
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let seed = derive_seed(plan.seed ^ LIMIT_SALT, i as u64);
            let est = limit_expectation(law, h.radius(), &h.bind(f), plan.limit_samples, seed)?;
            Ok(LimitValue {
                test_function: h.to_string(),
                estimate: est.estimate,
                stderr: est.stderr,
            })
        })
        .collect()
}

fn jobs(plan: &ExperimentPlan) -> Vec<(usize, u64)> {
    plan.n_list
        .iter()
        .flat_map(|&n| (0..plan.trials_per_n as u64).map(move |t| (n, t)))
        .collect()
}

/// A fresh weight field and noise path per trial: distances under the
/// weight-averaged law.
pub fn run_averaged_convergence(plan: &ExperimentPlan, law: &LimitLaw) -> Result<DistanceReport> {
    let p = law.params();
    plan.validate(p)?;
    let limits = limit_values(law, plan)?;
    let records = jobs(plan)
        .into_par_iter()
        .map(|(n, trial)| {
            let ens = realize(law, plan, n, None, trial_seed(plan.seed, n, trial))?;
            record_for(law, plan, &ens, trial, &limits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = DistanceReport::new(Experiment::Averaged, plan.n_list.clone(), records);
    report.limit_values = limits;
    add_standard_checks(&mut report, law);
    Ok(report)
}

/// One weight field per size, shared by all trials; only initial values,
/// inputs and noise vary. Adds exceedance fractions when the plan asks.
pub fn run_quenched_convergence(plan: &ExperimentPlan, law: &LimitLaw) -> Result<DistanceReport> {
    let p = law.params();
    plan.validate(p)?;
    let limits = limit_values(law, plan)?;
    let fields = plan
        .n_list
        .par_iter()
        .map(|&n| sample_weights(p, &sim_config(plan, n, quenched_weight_seed(plan.seed, n))))
        .collect::<Result<Vec<_>>>()?;
    let records = jobs(plan)
        .into_par_iter()
        .map(|(n, trial)| {
            let idx = plan.n_list.iter().position(|&x| x == n).expect("n from plan");
            let ens = realize(law, plan, n, Some(&fields[idx]), trial_seed(plan.seed, n, trial))?;
            record_for(law, plan, &ens, trial, &limits)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = DistanceReport::new(Experiment::Quenched, plan.n_list.clone(), records);
    report.limit_values = limits;
    add_standard_checks(&mut report, law);
    if let Some(ex) = &plan.exceedance {
        report.exceedance = exceedance_fractions(plan, ex, law)?;
        report.checks.push(exceedance_check(&report.exceedance));
    }
    Ok(report)
}

/// Sup-norm mean errors over `ex.draws` independent weight fields per size,
/// and the fraction above `ex.factor × median(anchor size)`.
pub fn exceedance_fractions(
    plan: &ExperimentPlan,
    ex: &ExceedancePlan,
    law: &LimitLaw,
) -> Result<Vec<ExceedanceRecord>> {
    let p = law.params();
    let jobs: Vec<(usize, u64)> = ex
        .n_list
        .iter()
        .flat_map(|&n| (0..ex.draws as u64).map(move |t| (n, t)))
        .collect();
    let errors = jobs
        .into_par_iter()
        .map(|(n, draw)| {
            let ens = realize(law, plan, n, None, trial_seed(plan.seed ^ EXCEEDANCE_SALT, n, draw))?;
            let stats = empirical_stats(&ens, p, 0)?;
            Ok((1..=law.horizon())
                .map(|s| (stats.c_hat[s - 1] - law.c(s)).abs())
                .fold(0.0, f64::max))
        })
        .collect::<Result<Vec<f64>>>()?;
    let per_n: Vec<&[f64]> = errors.chunks(ex.draws).collect();
    let anchor_idx = ex.n_list.iter().position(|&n| n == ex.anchor()).expect("validated anchor");
    let epsilon = ex.factor * median(per_n[anchor_idx]);
    Ok(ex
        .n_list
        .iter()
        .zip(per_n)
        .map(|(&n, errs)| {
            let exceed = errs.iter().filter(|&&e| e > epsilon).count();
            ExceedanceRecord {
                n,
                draws: ex.draws,
                epsilon,
                exceed,
                fraction: exceed as f64 / ex.draws as f64,
                median_error: median(errs),
            }
        })
        .collect())
}

/// One weight field and one noise path per size; compares the shift average
/// of `h` over all windows with its limit-law expectation.
pub fn run_ergodic_path(plan: &ExperimentPlan, law: &LimitLaw, erg: &ErgodicPlan) -> Result<DistanceReport> {
    let p = law.params();
    let mut checked = plan.clone();
    checked.ergodic = Some(erg.clone());
    checked.validate(p)?;
    let m = erg.radius();
    let h = erg.h.bind(p.f);
    let limit = limit_expectation(law, m, &h, plan.limit_samples, derive_seed(plan.seed ^ LIMIT_SALT, u64::MAX))?;
    let range = 2 * m + law.d();
    let results = plan
        .n_list
        .par_iter()
        .map(|&n| {
            let ens = realize(law, plan, n, None, trial_seed(plan.seed, n, 0))?;
            let values = window_values(&ens, &h, m)?;
            let (empirical, path_stderr) = shift_mean_and_stderr(&values, range);
            let gap = (empirical - limit.estimate).abs();
            let mut rec = record_for(law, plan, &ens, 0, &[])?;
            rec.test_gaps = vec![gap];
            let erg_rec = ErgodicRecord {
                n,
                empirical,
                path_stderr,
                limit,
                gap,
                combined_stderr: path_stderr.hypot(limit.stderr),
            };
            Ok((rec, erg_rec))
        })
        .collect::<Result<Vec<_>>>()?;
    let (records, ergodic): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut report = DistanceReport::new(Experiment::Ergodic, plan.n_list.clone(), records);
    report.limit_values = vec![LimitValue {
        test_function: erg.h.to_string(),
        estimate: limit.estimate,
        stderr: limit.stderr,
    }];
    report.ergodic = ergodic;
    report.checks.extend(ergodic_checks(&report.ergodic));
    Ok(report)
}

/// Mean of a ring of values and its standard error from the circular
/// autocovariance summed up to lag `range`.
pub fn shift_mean_and_stderr(values: &[f64], range: usize) -> (f64, f64) {
    let len = values.len();
    let nf = len as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let autocov = |k: usize| {
        (0..len)
            .map(|j| (values[j] - mean) * (values[(j + k) % len] - mean))
            .sum::<f64>()
            / nf
    };
    let mut var = autocov(0);
    for k in 1..=range.min(len / 2) {
        var += 2.0 * autocov(k);
    }
    (mean, (var.max(0.0) / nf).sqrt())
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn add_standard_checks(report: &mut DistanceReport, law: &LimitLaw) {
    let p = law.params();
    if p.is_decoupled() {
        let mut failures = Vec::new();
        for &n in &report.n_list {
            let bound = clt_envelope(p.sigma2, n);
            for s in report.summaries.iter().filter(|s| s.n == n) {
                if (s.metric == "mean_error" || s.metric.starts_with("cov_error")) && s.median > bound {
                    failures.push(format!("n={n} {}={:.4e} > {bound:.4e}", s.metric, s.median));
                }
            }
        }
        let detail = if failures.is_empty() {
            "median distances within 4σ²/√(2n+1)".to_string()
        } else {
            failures.join("; ")
        };
        report.checks.push(Check::new("clt_envelope", failures.is_empty(), detail));
    }
    let medians = report.medians("mean_error");
    if medians.len() >= 2 {
        report.checks.push(Check::new(
            "median_mean_error_decreasing",
            strictly_decreasing(&medians),
            format!("medians {}", fmt_list(&medians)),
        ));
        let x: Vec<f64> = report.n_list.iter().map(|&n| ((2 * n + 1) as f64).ln()).collect();
        let y: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
        let b = slope(&x, &y);
        report.checks.push(Check::new(
            "mean_error_slope",
            (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&b),
            format!("log-log slope {b:.4} against 2n+1"),
        ));
    }
}

fn exceedance_check(records: &[ExceedanceRecord]) -> Check {
    let fractions: Vec<f64> = records.iter().map(|r| r.fraction).collect();
    Check::new(
        "exceedance_decreasing",
        strictly_decreasing(&fractions),
        format!(
            "epsilon {:.4e}, fractions {}",
            records.first().map_or(0.0, |r| r.epsilon),
            fmt_list(&fractions)
        ),
    )
}

fn ergodic_checks(records: &[ErgodicRecord]) -> Vec<Check> {
    let mut out = Vec::new();
    let gaps: Vec<f64> = records.iter().map(|r| r.gap).collect();
    if gaps.len() >= 2 {
        out.push(Check::new(
            "ergodic_gap_decreasing",
            strictly_decreasing(&gaps),
            format!("gaps {}", fmt_list(&gaps)),
        ));
    }
    if let Some(last) = records.last() {
        out.push(Check::new(
            "ergodic_gap_within_4se",
            last.gap <= 4.0 * last.combined_stderr,
            format!("n={} gap {:.4e}, combined stderr {:.4e}", last.n, last.gap, last.combined_stderr),
        ));
    }
    out
}

/// Quenched medians of the mean and covariance errors at every shared size
/// are at most `factor` times the averaged medians.
pub fn compare_quenched_to_averaged(
    quenched: &DistanceReport,
    averaged: &DistanceReport,
    factor: f64,
) -> Check {
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for q in &quenched.summaries {
        if !(q.metric == "mean_error" || q.metric.starts_with("cov_error")) {
            continue;
        }
        if let Some(a) = averaged.summary(q.n, &q.metric) {
            let ratio = q.median / a.median;
            worst = worst.max(ratio);
            detail.push(format!("n={} {} ratio {ratio:.3}", q.n, q.metric));
        }
    }
    Check::new(
        "quenched_within_averaged",
        !detail.is_empty() && worst <= factor,
        format!("max ratio {worst:.3} (limit {factor}); {}", detail.join(", ")),
    )
}

/// Runs the plan's experiment.
pub fn run_plan(plan: &ExperimentPlan, law: &LimitLaw) -> Result<DistanceReport> {
    match plan.experiment {
        Experiment::Averaged => run_averaged_convergence(plan, law),
        Experiment::Quenched => run_quenched_convergence(plan, law),
        Experiment::Ergodic => {
            plan.validate(law.params())?;
            let erg = plan.ergodic.as_ref().expect("validated ergodic section");
            run_ergodic_path(plan, law, erg)
        }
    }
}
