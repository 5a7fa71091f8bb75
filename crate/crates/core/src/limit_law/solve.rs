use rayon::prelude::*;

use crate::error::Result;
use crate::limit_law::moments::{assemble_k, mean_entry, moment_cross, moment_same, Integrator};
use crate::limit_law::LimitLaw;
use crate::model::ModelParams;
use crate::quadrature::QuadratureConfig;

/// One moment entry `M^lag_{r,s}`.
#[derive(Debug, Clone, Copy)]
struct MomentJob {
    lag: usize,
    r: usize,
    s: usize,
}

fn eval_job(law: &LimitLaw, job: MomentJob, integ: &Integrator) -> Result<f64> {
    if job.lag == 0 {
        moment_same(law, job.r, job.s, integ)
    } else {
        moment_cross(law, job.lag as i64, job.r, job.s, integ)
    }
}

fn eval_jobs(law: &LimitLaw, jobs: &[MomentJob], integ: &Integrator) -> Result<Vec<f64>> {
    jobs.par_iter().map(|&job| eval_job(law, job, integ)).collect()
}

/// Computes the limit law by induction on time. Step `t` evaluates `c_t`,
/// the moment entries in row and column `t`, and then the covariance
/// entries in row and column `t`, using only quantities from times `< t`.
pub fn solve_limit_law(p: &ModelParams, q: &QuadratureConfig) -> Result<LimitLaw> {
    let p = p.clone().validate()?;
    let integ = Integrator::new(&p, q)?;
    let mut law = LimitLaw::empty(p);
    let horizon = law.horizon();
    let lm = law.moment_lag_radius();
    let d = law.d();

    for t in 1..=horizon {
        let c_t = mean_entry(&law, t, &integ)?;

        let mut jobs = Vec::new();
        for lag in 0..=lm {
            for r in 1..=t {
                jobs.push(MomentJob { lag, r, s: t });
            }
            // M^0 is symmetric; the row is mirrored from the column.
            if lag > 0 {
                for s in 1..t {
                    jobs.push(MomentJob { lag, r: t, s });
                }
            }
        }
        let values = eval_jobs(&law, &jobs, &integ)?;

        law.c[t - 1] = c_t;
        for (job, v) in jobs.iter().zip(values) {
            law.m[job.lag][(job.r - 1, job.s - 1)] = v;
            if job.lag == 0 {
                law.m[0][(job.s - 1, job.r - 1)] = v;
            }
        }

        let lambda = law.params.lambda.clone();
        let theta2 = law.params.theta2;
        for k in 0..=d {
            let mut entries = Vec::with_capacity(2 * t);
            for r in 1..=t {
                entries.push((r, t));
            }
            for s in 1..t {
                entries.push((t, s));
            }
            for (r, s) in entries {
                let v = assemble_k(&lambda, theta2, k as i64, r, s, |l| law.m(l, r, s))?;
                law.k[k][(r - 1, s - 1)] = v;
            }
        }
        law.filled = t;
    }
    Ok(law)
}

/// Evaluates the map `ν ↦ Q^ν`: every mean, moment and covariance entry is
/// recomputed from the marginals of `nu`. The limit law is its fixed point.
pub fn apply_q(nu: &LimitLaw, q: &QuadratureConfig) -> Result<LimitLaw> {
    assert!(nu.is_complete(), "apply_q needs a complete input law");
    let integ = Integrator::new(nu.params(), q)?;
    let horizon = nu.horizon();
    let lm = nu.moment_lag_radius();

    let c = (1..=horizon)
        .into_par_iter()
        .map(|s| mean_entry(nu, s, &integ))
        .collect::<Result<Vec<_>>>()?;

    let mut jobs = Vec::new();
    for lag in 0..=lm {
        for r in 1..=horizon {
            let first = if lag == 0 { r } else { 1 };
            for s in first..=horizon {
                jobs.push(MomentJob { lag, r, s });
            }
        }
    }
    let values = eval_jobs(nu, &jobs, &integ)?;

    let mut out = LimitLaw::empty(nu.params().clone());
    out.c = c;
    for (job, v) in jobs.iter().zip(values) {
        out.m[job.lag][(job.r - 1, job.s - 1)] = v;
        if job.lag == 0 {
            out.m[0][(job.s - 1, job.r - 1)] = v;
        }
    }
    let lambda = out.params.lambda.clone();
    let theta2 = out.params.theta2;
    for k in 0..=out.d() {
        for r in 1..=horizon {
            for s in 1..=horizon {
                let v = assemble_k(&lambda, theta2, k as i64, r, s, |l| out.m(l, r, s))?;
                out.k[k][(r - 1, s - 1)] = v;
            }
        }
    }
    out.filled = horizon;
    Ok(out)
}
