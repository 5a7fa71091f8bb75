use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::limit_law::oracle::OracleEstimate;
use crate::limit_law::LimitLaw;
use crate::linalg::{min_eigenvalue, psd_factor, ROUNDOFF_TOL};
use crate::model::{psi_inverse, InitialLaw};
use crate::rng::{stream_rng, Stream};
use crate::stats::RunningMoments;
use crate::window::{Window, WindowFunctional};

/// Tolerance on the smallest eigenvalue of an assembled window covariance.
pub const WINDOW_PSD_TOL: f64 = 1e-8;

/// Initial-law factor(s) times a Gaussian block over the v-coordinates of
/// times `1..` of each neuron, blocks concatenated in order.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMarginal {
    pub init: Vec<InitialLaw>,
    /// Number of Gaussian times in each neuron's block.
    pub blocks: Vec<usize>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianMarginal {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_psd(cov: &DMatrix<f64>, tol: f64, context: &str) -> Result<f64> {
    let min = min_eigenvalue(cov);
    if min < -tol {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eig: min,
        });
    }
    Ok(min)
}

fn require(law: &LimitLaw, t: usize) -> Result<()> {
    if t > law.filled() {
        return Err(Error::OutOfRange(format!(
            "marginal up to time {t} requested but only {} computed",
            law.filled()
        )));
    }
    Ok(())
}

/// Single-neuron marginal over times `0..=t`: `μ_I ⊗ N(c_{1..t}, σ² Id + K^0_{(t,t)})`.
pub fn single_marginal(law: &LimitLaw, t: usize) -> Result<GaussianMarginal> {
    require(law, t)?;
    let sigma2 = law.sigma2();
    let mean = DVector::from_iterator(t, (1..=t).map(|s| law.c(s)));
    let mut cov = DMatrix::from_fn(t, t, |i, j| {
        law.k(0, i + 1, j + 1) + if i == j { sigma2 } else { 0.0 }
    });
    symmetrize(&mut cov);
    check_psd(&cov, ROUNDOFF_TOL, &format!("single-neuron marginal up to time {t}"))?;
    Ok(GaussianMarginal {
        init: vec![law.mu_init().clone()],
        blocks: vec![t],
        mean,
        cov,
    })
}

/// Pair marginal of neurons `0` (times `0..=t`) and `lag` (times `0..=s`).
pub fn pair_marginal(law: &LimitLaw, lag: i64, t: usize, s: usize) -> Result<GaussianMarginal> {
    if lag == 0 {
        return Err(Error::OutOfRange("pair marginal needs a nonzero lag".into()));
    }
    require(law, t.max(s))?;
    let sigma2 = law.sigma2();
    let n = t + s;
    let mean = DVector::from_iterator(n, (1..=t).chain(1..=s).map(|r| law.c(r)));
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = match (i < t, j < t) {
                (true, true) => law.k(0, i + 1, j + 1),
                (false, false) => law.k(0, i - t + 1, j - t + 1),
                (true, false) => law.k(lag, i + 1, j - t + 1),
                (false, true) => law.k(lag, j + 1, i - t + 1),
            };
            cov[(i, j)] = v + if i == j { sigma2 } else { 0.0 };
        }
    }
    symmetrize(&mut cov);
    check_psd(&cov, ROUNDOFF_TOL, &format!("pair marginal lag {lag} up to ({t},{s})"))?;
    Ok(GaussianMarginal {
        init: vec![law.mu_init().clone(), law.mu_init().clone()],
        blocks: vec![t, s],
        mean,
        cov,
    })
}

/// Joint law of the v-coordinates of neurons `-m..=m` over times `1..=T`.
#[derive(Debug, Clone)]
pub struct WindowLaw {
    pub m: usize,
    pub horizon: usize,
    pub mean: DVector<f64>,
    /// Neuron-major: index `(j + m) * T + (r - 1)`.
    pub cov: DMatrix<f64>,
    pub min_eigenvalue: f64,
}

/// Block `(j, j')` is `σ² Id·[j = j'] + K^{j'-j}`; the mean stacks `c`.
pub fn window_covariance(law: &LimitLaw, m: usize) -> Result<WindowLaw> {
    require(law, law.horizon())?;
    let t = law.horizon();
    let width = 2 * m + 1;
    let n = width * t;
    let sigma2 = law.sigma2();
    let mean = DVector::from_iterator(n, (0..width).flat_map(|_| (1..=t).map(|s| law.c(s))));
    let mut cov = DMatrix::zeros(n, n);
    for a in 0..width {
        for b in 0..width {
            let lag = b as i64 - a as i64;
            for r in 1..=t {
                for s in 1..=t {
                    let mut v = law.k(lag, r, s);
                    if lag == 0 && r == s {
                        v += sigma2;
                    }
                    cov[(a * t + r - 1, b * t + s - 1)] = v;
                }
            }
        }
    }
    symmetrize(&mut cov);
    let min = check_psd(&cov, WINDOW_PSD_TOL, &format!("window covariance m={m}"))?;
    Ok(WindowLaw {
        m,
        horizon: t,
        mean,
        cov,
        min_eigenvalue: min,
    })
}

const CHUNK: usize = 8192;

/// Draws exact samples of the window marginal in u-coordinates.
pub struct WindowSampler<'a> {
    law: &'a LimitLaw,
    window: WindowLaw,
    factor: DMatrix<f64>,
}

impl<'a> WindowSampler<'a> {
    pub fn new(law: &'a LimitLaw, m: usize) -> Result<Self> {
        let window = window_covariance(law, m)?;
        let factor = psd_factor(&window.cov, "window covariance")?;
        Ok(WindowSampler { law, window, factor })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Window {
        let p = self.law.params();
        let (m, horizon) = (self.window.m, self.window.horizon);
        let width = 2 * m + 1;
        let v0: Vec<f64> = (0..width).map(|_| p.mu_init.sample(rng)).collect();
        let z = DVector::<f64>::from_fn(width * horizon, |_, _| rng.sample(StandardNormal));
        let g = &self.window.mean + &self.factor * z;
        let mut w = Window::zeros(m, horizon);
        let mut v = vec![0.0; horizon + 1];
        for (j, &init) in v0.iter().enumerate() {
            v[0] = init;
            v[1..].copy_from_slice(&g.as_slice()[j * horizon..(j + 1) * horizon]);
            let u = psi_inverse(&v, p.gamma, p.theta_bar);
            w.trajectory_mut(j as i64 - m as i64).copy_from_slice(&u);
        }
        w
    }
}

/// Runs `per_chunk(sampler, rng, count)` over fixed-size chunks; chunk `i`
/// draws from stream `(seed, i)` so results do not depend on threading.
fn sample_chunks<T: Send>(
    law: &LimitLaw,
    m: usize,
    n: usize,
    seed: u64,
    per_chunk: impl Fn(&WindowSampler<'_>, &mut crate::rng::StreamRng, usize) -> T + Sync,
) -> Result<Vec<T>> {
    let sampler = WindowSampler::new(law, m)?;
    let chunks = n.div_ceil(CHUNK);
    Ok((0..chunks)
        .into_par_iter()
        .map(|ci| {
            let mut rng = stream_rng(seed, ci as u64, Stream::LimitSample);
            let count = CHUNK.min(n - ci * CHUNK);
            per_chunk(&sampler, &mut rng, count)
        })
        .collect())
}

/// `n` exact samples of the window marginal `μ_e^{V_m}` in u-coordinates.
pub fn sample_limit_law(law: &LimitLaw, m: usize, n: usize, seed: u64) -> Result<Vec<Window>> {
    let parts = sample_chunks(law, m, n, seed, |sampler, rng, count| {
        (0..count).map(|_| sampler.draw(rng)).collect::<Vec<_>>()
    })?;
    Ok(parts.into_iter().flatten().collect())
}

/// Monte Carlo estimate of `E[h]` under `μ_e^{V_m}` with its standard error.
pub fn limit_expectation(
    law: &LimitLaw,
    m: usize,
    h: &dyn WindowFunctional,
    n: usize,
    seed: u64,
) -> Result<OracleEstimate> {
    let parts = sample_chunks(law, m, n, seed, |sampler, rng, count| {
        let mut acc = RunningMoments::default();
        for _ in 0..count {
            acc.push(h.eval(&sampler.draw(rng)));
        }
        acc
    })?;
    let mut total = RunningMoments::default();
    for part in &parts {
        total.merge(part);
    }
    Ok(OracleEstimate::from_moments(&total))
}
