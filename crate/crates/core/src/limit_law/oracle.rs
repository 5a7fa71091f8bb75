//! Brute-force Monte Carlo counterpart of the quadrature: samples full
//! marginals, maps them through `Ψ⁻¹` trajectory by trajectory, and averages.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_law::marginal::{pair_marginal, single_marginal, GaussianMarginal};
use crate::limit_law::LimitLaw;
use crate::linalg::psd_factor;
use crate::model::psi_inverse;
use crate::rng::{stream_rng, Stream};
use crate::stats::RunningMoments;

const CHUNK: usize = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleTarget {
    /// `c_s`.
    Mean { s: usize },
    /// `M^0_{r,s}`.
    Same { r: usize, s: usize },
    /// `M^lag_{r,s}`, `lag ≠ 0`.
    Cross { lag: i64, r: usize, s: usize },
}

impl std::fmt::Display for OracleTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleTarget::Mean { s } => write!(f, "c[{s}]"),
            OracleTarget::Same { r, s } => write!(f, "M0[{r},{s}]"),
            OracleTarget::Cross { lag, r, s } => write!(f, "M{lag}[{r},{s}]"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl OracleEstimate {
    pub(crate) fn from_moments(m: &RunningMoments) -> Self {
        OracleEstimate {
            estimate: m.mean,
            stderr: m.std_error(),
            samples: m.count,
        }
    }

    /// `(value - estimate) / stderr`, with `0/0 = 0`.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = value - self.estimate;
        if diff == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            // Exact estimator: only roundoff-level differences count as agreement.
            if diff.abs() <= 1e-12 * (1.0 + value.abs()) {
                0.0
            } else {
                f64::INFINITY.copysign(diff)
            }
        } else {
            diff / self.stderr
        }
    }
}

/// Estimates the target with the model's sigmoid.
pub fn mc_moment_oracle(
    law: &LimitLaw,
    target: OracleTarget,
    n: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    let f = law.params().f;
    mc_oracle_with(law, target, n, seed, &move |x| f.eval(x))
}

/// Like [`mc_moment_oracle`] with the nonlinearity replaced by `phi`.
pub fn mc_oracle_with(
    law: &LimitLaw,
    target: OracleTarget,
    n: usize,
    seed: u64,
    phi: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<OracleEstimate> {
    if n < 100 {
        return Err(Error::TooFewSamples(n));
    }
    let p = law.params();
    let (marginal, times, scale) = match target {
        OracleTarget::Mean { s } => (single_marginal(law, check(law, s)? - 1)?, [s - 1, s - 1], p.j_bar),
        OracleTarget::Same { r, s } => {
            let top = check(law, r)?.max(check(law, s)?) - 1;
            (single_marginal(law, top)?, [r - 1, s - 1], 1.0)
        }
        OracleTarget::Cross { lag, r, s } => {
            check(law, r)?;
            check(law, s)?;
            (pair_marginal(law, lag, r - 1, s - 1)?, [r - 1, s - 1], 1.0)
        }
    };
    let factor = psd_factor(&marginal.cov, "oracle marginal")?;
    let (gamma, theta_bar) = (p.gamma, p.theta_bar);

    let draw = |rng: &mut crate::rng::StreamRng| -> f64 {
        let g = gaussian_draw(&marginal, &factor, rng);
        let mut offset = 0;
        let mut values = [0.0; 2];
        let mut trajectories = Vec::with_capacity(2);
        for (law0, &len) in marginal.init.iter().zip(&marginal.blocks) {
            let mut v = Vec::with_capacity(len + 1);
            v.push(law0.sample(rng));
            v.extend_from_slice(&g.as_slice()[offset..offset + len]);
            offset += len;
            trajectories.push(psi_inverse(&v, gamma, theta_bar));
        }
        match target {
            OracleTarget::Mean { .. } => scale * phi(trajectories[0][times[0]]),
            OracleTarget::Same { .. } => {
                values[0] = phi(trajectories[0][times[0]]);
                values[1] = phi(trajectories[0][times[1]]);
                values[0] * values[1]
            }
            OracleTarget::Cross { .. } => {
                phi(trajectories[0][times[0]]) * phi(trajectories[1][times[1]])
            }
        }
    };

    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<RunningMoments> = (0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream_rng(seed, ci as u64, Stream::Oracle);
            let mut acc = RunningMoments::default();
            for _ in 0..CHUNK.min(n - ci * CHUNK) {
                acc.push(draw(&mut rng));
            }
            acc
        })
        .collect();
    let mut total = RunningMoments::default();
    for part in &parts {
        total.merge(part);
    }
    Ok(OracleEstimate::from_moments(&total))
}

fn check(law: &LimitLaw, s: usize) -> Result<usize> {
    if s == 0 || s > law.horizon() {
        return Err(Error::OutOfRange(format!("time {s} outside 1..={}", law.horizon())));
    }
    Ok(s)
}

fn gaussian_draw<R: Rng + ?Sized>(
    marginal: &GaussianMarginal,
    factor: &nalgebra::DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::<f64>::from_fn(marginal.dim(), |_, _| rng.sample(StandardNormal));
    &marginal.mean + factor * z
}
