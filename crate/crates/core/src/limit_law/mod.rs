//! The limit law of the network in v-coordinates: a mean vector over times
//! `1..=T`, lag covariance blocks `K^k` and the moment blocks `M^l` that feed
//! them, computed by induction on time.

mod marginal;
mod moments;
mod oracle;
mod solve;

pub use marginal::{
    limit_expectation, pair_marginal, sample_limit_law, single_marginal, window_covariance,
    GaussianMarginal, WindowLaw, WindowSampler,
};
pub use moments::{assemble_k, mean_entry, moment_cross, moment_same, Integrator};
pub use oracle::{mc_moment_oracle, mc_oracle_with, OracleEstimate, OracleTarget};
pub use solve::{apply_q, solve_limit_law};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InitialLaw, ModelParams};

pub const LIMIT_LAW_VERSION: &str = "limitlaw-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct LimitLaw {
    params: ModelParams,
    /// `c[s-1] = c_s`.
    c: Vec<f64>,
    /// `k[lag]` for lags `0..=d`, entry `(r-1, s-1)`.
    k: Vec<DMatrix<f64>>,
    /// `m[lag]` for lags `0..=L_M`.
    m: Vec<DMatrix<f64>>,
    /// Times `1..=filled` are complete.
    filled: usize,
}

impl LimitLaw {
    /// An empty law at time 0: only the initial factor is known.
    pub(crate) fn empty(params: ModelParams) -> Self {
        let t = params.horizon_t;
        let d = params.lambda.d();
        let lm = params.lambda.moment_lag_radius();
        LimitLaw {
            c: vec![0.0; t],
            k: vec![DMatrix::zeros(t, t); d + 1],
            m: vec![DMatrix::zeros(t, t); lm + 1],
            filled: 0,
            params,
        }
    }

    /// A complete law with given mean and covariance blocks (lags `0..=d`).
    /// Moment blocks are left at zero; this is the input shape of [`apply_q`].
    pub fn from_parts(params: ModelParams, c: Vec<f64>, k: Vec<DMatrix<f64>>) -> Result<Self> {
        let t = params.horizon_t;
        let d = params.lambda.d();
        if c.len() != t {
            return Err(Error::Shape(format!("mean has length {}, expected {t}", c.len())));
        }
        if k.len() != d + 1 || k.iter().any(|m| m.shape() != (t, t)) {
            return Err(Error::Shape(format!(
                "expected {} covariance blocks of size {t}x{t}",
                d + 1
            )));
        }
        let mut law = LimitLaw::empty(params);
        law.c = c;
        law.k = k;
        law.filled = t;
        Ok(law)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn horizon(&self) -> usize {
        self.params.horizon_t
    }

    pub fn d(&self) -> usize {
        self.params.lambda.d()
    }

    pub fn sigma2(&self) -> f64 {
        self.params.sigma2
    }

    pub fn mu_init(&self) -> &InitialLaw {
        &self.params.mu_init
    }

    /// Largest stored moment lag.
    pub fn moment_lag_radius(&self) -> usize {
        self.m.len() - 1
    }

    pub fn filled(&self) -> usize {
        self.filled
    }

    pub fn is_complete(&self) -> bool {
        self.filled == self.horizon()
    }

    /// `c_s`, `1 ≤ s ≤ T`.
    pub fn c(&self, s: usize) -> f64 {
        self.c[s - 1]
    }

    pub fn mean_vector(&self) -> &[f64] {
        &self.c
    }

    /// `K^lag_{r,s}` for any integer lag; `K^{-l}_{s,r} = K^l_{r,s}` and zero beyond `d`.
    pub fn k(&self, lag: i64, r: usize, s: usize) -> f64 {
        let a = lag.unsigned_abs() as usize;
        if a >= self.k.len() {
            return 0.0;
        }
        if lag >= 0 {
            self.k[a][(r - 1, s - 1)]
        } else {
            self.k[a][(s - 1, r - 1)]
        }
    }

    /// `K^lag` as a `T × T` matrix (transpose of the stored block for negative lags).
    pub fn k_block(&self, lag: i64) -> DMatrix<f64> {
        let t = self.horizon();
        let a = lag.unsigned_abs() as usize;
        if a >= self.k.len() {
            return DMatrix::zeros(t, t);
        }
        if lag >= 0 {
            self.k[a].clone()
        } else {
            self.k[a].transpose()
        }
    }

    /// `M^lag_{r,s}`; `None` for lags outside the stored range.
    pub fn m(&self, lag: i64, r: usize, s: usize) -> Option<f64> {
        let a = lag.unsigned_abs() as usize;
        if a >= self.m.len() {
            return None;
        }
        Some(if lag >= 0 {
            self.m[a][(r - 1, s - 1)]
        } else {
            self.m[a][(s - 1, r - 1)]
        })
    }

    pub fn m_block(&self, lag: usize) -> Option<&DMatrix<f64>> {
        self.m.get(lag)
    }

    /// Returns a copy with every `c_s` shifted by `delta`.
    pub fn with_mean_shift(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.c.iter_mut().for_each(|c| *c += delta);
        out
    }

    /// Sup-norm distance over `c` and all `K` blocks.
    pub fn sup_distance(&self, other: &LimitLaw) -> f64 {
        let dc = self
            .c
            .iter()
            .zip(&other.c)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let dk = self
            .k
            .iter()
            .zip(&other.k)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max);
        dc.max(dk)
    }

    /// Sup-norm distance over `c`, `K` and `M`.
    pub fn sup_distance_all(&self, other: &LimitLaw) -> f64 {
        let dm = self
            .m
            .iter()
            .zip(&other.m)
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max);
        self.sup_distance(other).max(dm)
    }

    pub fn k_frobenius(&self) -> Vec<f64> {
        self.k.iter().map(|m| m.norm()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LimitLawDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: LimitLawDoc = serde_json::from_str(s)?;
        LimitLaw::try_from(doc)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagMatrix {
    pub lag: i64,
    /// Row-major `T × T`.
    pub matrix: Vec<f64>,
}

pub(crate) fn to_lag_matrix(lag: i64, m: &DMatrix<f64>) -> LagMatrix {
    let mut matrix = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        for s in 0..m.ncols() {
            matrix.push(m[(r, s)]);
        }
    }
    LagMatrix { lag, matrix }
}

pub(crate) fn from_lag_matrix(rec: &LagMatrix, t: usize) -> Result<DMatrix<f64>> {
    if rec.matrix.len() != t * t {
        return Err(Error::Format(format!(
            "lag {} matrix has {} entries, expected {}",
            rec.lag,
            rec.matrix.len(),
            t * t
        )));
    }
    Ok(DMatrix::from_row_slice(t, t, &rec.matrix))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LimitLawDoc {
    version: String,
    #[serde(rename = "horizon_T")]
    horizon_t: usize,
    d: usize,
    sigma2: f64,
    mu_init: InitialLaw,
    c: Vec<f64>,
    #[serde(rename = "K")]
    k: Vec<LagMatrix>,
    #[serde(rename = "M")]
    m: Vec<LagMatrix>,
    params: ModelParams,
}

impl From<&LimitLaw> for LimitLawDoc {
    fn from(law: &LimitLaw) -> Self {
        LimitLawDoc {
            version: LIMIT_LAW_VERSION.to_string(),
            horizon_t: law.horizon(),
            d: law.d(),
            sigma2: law.sigma2(),
            mu_init: law.mu_init().clone(),
            c: law.c.clone(),
            k: law
                .k
                .iter()
                .enumerate()
                .map(|(l, m)| to_lag_matrix(l as i64, m))
                .collect(),
            m: law
                .m
                .iter()
                .enumerate()
                .map(|(l, m)| to_lag_matrix(l as i64, m))
                .collect(),
            params: law.params.clone(),
        }
    }
}

impl TryFrom<LimitLawDoc> for LimitLaw {
    type Error = Error;

    fn try_from(doc: LimitLawDoc) -> Result<Self> {
        if doc.version != LIMIT_LAW_VERSION {
            return Err(Error::Format(format!("unsupported version {}", doc.version)));
        }
        let t = doc.horizon_t;
        if doc.params.horizon_t != t || doc.params.lambda.d() != doc.d {
            return Err(Error::Format("header disagrees with embedded params".into()));
        }
        let mut law = LimitLaw::empty(doc.params);
        if doc.c.len() != t {
            return Err(Error::Format("c has the wrong length".into()));
        }
        law.c = doc.c;
        for (store, recs, what) in [(&mut law.k, &doc.k, "K"), (&mut law.m, &doc.m, "M")] {
            if recs.len() != store.len() {
                return Err(Error::Format(format!(
                    "{what} has {} lags, expected {}",
                    recs.len(),
                    store.len()
                )));
            }
            for rec in recs {
                let idx = usize::try_from(rec.lag)
                    .ok()
                    .filter(|&i| i < store.len())
                    .ok_or_else(|| Error::Format(format!("{what} lag {} out of range", rec.lag)))?;
                store[idx] = from_lag_matrix(rec, t)?;
            }
        }
        law.filled = t;
        Ok(law)
    }
}


#[cfg(test)]
mod tests;
