//! Shift-averaged statistics of one ensemble, with neuron indices wrapped
//! periodically on `V_n`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit_law::{from_lag_matrix, to_lag_matrix, LagMatrix};
use crate::model::{psi_forward, ModelParams};
use crate::network::simulate::TrajectoryEnsemble;
use crate::window::{Window, WindowFunctional};

pub const EMPIRICAL_STATS_VERSION: &str = "empstats-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalStats {
    pub n: usize,
    pub horizon: usize,
    /// `c_hat[s-1]`.
    pub c_hat: Vec<f64>,
    /// `k_hat[k]` for lags `0..=k_max`, entry `(r-1, s-1)`.
    pub k_hat: Vec<DMatrix<f64>>,
    /// `pools[s-1]` holds `v^j_s` for every neuron.
    pub pools: Vec<Vec<f64>>,
}

/// v-coordinates of every neuron, by storage position.
pub fn v_coordinates(ens: &TrajectoryEnsemble, p: &ModelParams) -> Vec<Vec<f64>> {
    (0..ens.size())
        .map(|pos| psi_forward(ens.trajectory(pos), p.gamma, p.theta_bar))
        .collect()
}

pub fn empirical_stats(
    ens: &TrajectoryEnsemble,
    p: &ModelParams,
    k_max: usize,
) -> Result<EmpiricalStats> {
    if k_max > ens.n() {
        return Err(Error::OutOfRange(format!(
            "k_max={k_max} exceeds n={}",
            ens.n()
        )));
    }
    if ens.horizon() != p.horizon_t {
        return Err(Error::Shape(format!(
            "ensemble horizon {} differs from params horizon {}",
            ens.horizon(),
            p.horizon_t
        )));
    }
    Ok(stats_from_v(&v_coordinates(ens, p), ens.n(), ens.horizon(), k_max))
}

/// Statistics of `v` rows indexed by storage position (`2n+1` of them).
fn stats_from_v(v: &[Vec<f64>], n: usize, horizon: usize, k_max: usize) -> EmpiricalStats {
    let size = v.len();
    let nf = size as f64;
    let c_hat: Vec<f64> = (1..=horizon)
        .map(|s| v.iter().map(|row| row[s]).sum::<f64>() / nf)
        .collect();
    let k_hat = (0..=k_max)
        .map(|k| {
            let mut m = DMatrix::zeros(horizon, horizon);
            for pos in 0..size {
                let other = &v[(pos + k) % size];
                for r in 1..=horizon {
                    let a = v[pos][r] - c_hat[r - 1];
                    for s in 1..=horizon {
                        m[(r - 1, s - 1)] += a * (other[s] - c_hat[s - 1]);
                    }
                }
            }
            m / nf
        })
        .collect();
    let pools = (1..=horizon)
        .map(|s| v.iter().map(|row| row[s]).collect())
        .collect();
    EmpiricalStats {
        n,
        horizon,
        c_hat,
        k_hat,
        pools,
    }
}

/// `(1/|V_n|) Σ_j h(π^{V_m}(S^j u))` with wrapped neuron indices.
pub fn empirical_test_function(
    ens: &TrajectoryEnsemble,
    h: &dyn WindowFunctional,
    m: usize,
) -> Result<f64> {
    Ok(window_values(ens, h, m)?.iter().sum::<f64>() / ens.size() as f64)
}

/// `h` evaluated on the window centred at every neuron.
pub fn window_values(
    ens: &TrajectoryEnsemble,
    h: &dyn WindowFunctional,
    m: usize,
) -> Result<Vec<f64>> {
    if m > ens.n() {
        return Err(Error::OutOfRange(format!("window radius {m} exceeds n={}", ens.n())));
    }
    let size = ens.size() as i64;
    let mut w = Window::zeros(m, ens.horizon());
    Ok((0..size)
        .map(|pos| {
            for o in -(m as i64)..=m as i64 {
                let src = (pos + o).rem_euclid(size) as usize;
                w.trajectory_mut(o).copy_from_slice(ens.trajectory(src));
            }
            h.eval(&w)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmpiricalStatsDoc {
    version: String,
    #[serde(rename = "horizon_T")]
    horizon_t: usize,
    n: usize,
    c: Vec<f64>,
    #[serde(rename = "K")]
    k: Vec<LagMatrix>,
}

impl EmpiricalStats {
    pub fn to_json(&self) -> Result<String> {
        let doc = EmpiricalStatsDoc {
            version: EMPIRICAL_STATS_VERSION.into(),
            horizon_t: self.horizon,
            n: self.n,
            c: self.c_hat.clone(),
            k: self
                .k_hat
                .iter()
                .enumerate()
                .map(|(l, m)| to_lag_matrix(l as i64, m))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    /// Reads the moment part back; marginal pools are not persisted.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: EmpiricalStatsDoc = serde_json::from_str(s)?;
        if doc.version != EMPIRICAL_STATS_VERSION {
            return Err(Error::Format(format!("unsupported version {}", doc.version)));
        }
        let k_hat = doc
            .k
            .iter()
            .map(|rec| from_lag_matrix(rec, doc.horizon_t))
            .collect::<Result<Vec<_>>>()?;
        Ok(EmpiricalStats {
            n: doc.n,
            horizon: doc.horizon_t,
            c_hat: doc.c,
            k_hat,
            pools: Vec::new(),
        })
    }
}
