//! Stationary Gaussian weight fields on the `(2n+1) × (2n+1)` torus with
//! mean `J̄/(2n+1)` and covariance `Cov(J_{i+k,j+l}, J_{ij}) = Λ(k,l)/(2n+1)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::model::{lambda_psd_check, lambda_spectrum, ModelParams};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::stats::RunningMoments;
use crate::spectral::{fft2, wrap};

/// Largest `n` accepted by the dense sampler (a `(2n+1)² × (2n+1)²` factorization).
pub const DIRECT_MAX_N: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMethod {
    #[default]
    FftTorus,
    DirectFactorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub weight_method: WeightMethod,
}

impl SimConfig {
    pub fn new(n: usize, seed: u64) -> Self {
        SimConfig {
            n,
            seed,
            weight_method: WeightMethod::FftTorus,
        }
    }

    pub fn population(&self) -> usize {
        2 * self.n + 1
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidParams(vec!["sim.n must be >= 1".into()]));
        }
        if self.population() <= 2 * p.lambda.d() {
            return Err(Error::TorusTooSmall {
                size: self.population(),
                d: p.lambda.d(),
            });
        }
        Ok(())
    }
}

/// Synaptic matrix; row = postsynaptic neuron, column = presynaptic neuron,
/// neuron `j ∈ -n..=n` stored at position `j + n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    n: usize,
    data: Vec<f64>,
}

impl WeightField {
    pub fn from_rows(n: usize, data: Vec<f64>) -> Result<Self> {
        let size = 2 * n + 1;
        if data.len() != size * size {
            return Err(Error::Shape(format!(
                "weight matrix needs {} entries, got {}",
                size * size,
                data.len()
            )));
        }
        Ok(WeightField { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        2 * self.n + 1
    }

    /// Entry by storage position.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.size() + col]
    }

    /// `J_{ij}` by neuron labels in `-n..=n`.
    pub fn get(&self, i: i64, j: i64) -> f64 {
        let n = self.n as i64;
        self.at((i + n) as usize, (j + n) as usize)
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let size = self.size();
        &self.data[row * size..(row + 1) * size]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Draws one weight field from stream `(sim.seed, 0, weights)`.
pub fn sample_weights(p: &ModelParams, sim: &SimConfig) -> Result<WeightField> {
    sim.validate(p)?;
    let mut rng = stream_rng(sim.seed, 0, Stream::Weights);
    Ok(match sim.weight_method {
        WeightMethod::FftTorus => FftSampler::new(p, sim.n)?.draw(&mut rng),
        WeightMethod::DirectFactorization => DirectSampler::new(p, sim.n)?.draw(&mut rng),
    })
}

/// Spectral synthesis on the torus. Reusable across draws.
#[derive(Debug, Clone)]
pub struct FftSampler {
    n: usize,
    mean: f64,
    /// `sqrt(λ_p) / N` per frequency, zero for a null covariance.
    amplitude: Vec<f64>,
    deterministic: bool,
}

impl FftSampler {
    pub fn new(p: &ModelParams, n: usize) -> Result<Self> {
        let size = 2 * n + 1;
        let check = lambda_psd_check(&p.lambda, size)?;
        if !check.passed {
            return Err(Error::SpectrallyInvalid {
                min: check.min_value,
            });
        }
        // Spectrum of Λ/N; the field uses sqrt(spectrum / N²) per mode.
        let spectrum = lambda_spectrum(&p.lambda, size)?;
        let nf = size as f64;
        let amplitude = spectrum
            .iter()
            .map(|&s| (s.max(0.0) / nf).sqrt() / nf)
            .collect();
        Ok(FftSampler {
            n,
            mean: p.j_bar / nf,
            amplitude,
            deterministic: p.lambda.is_zero(),
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightField {
        let size = 2 * self.n + 1;
        if self.deterministic {
            return WeightField {
                n: self.n,
                data: vec![self.mean; size * size],
            };
        }
        let mut buf: Vec<Complex64> = self
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(a * re, a * im)
            })
            .collect();
        fft2(&mut buf, size, FftDirection::Forward);
        WeightField {
            n: self.n,
            data: buf.iter().map(|z| self.mean + z.re).collect(),
        }
    }
}

/// Dense factorization of the full block-circulant covariance.
#[derive(Debug, Clone)]
pub struct DirectSampler {
    n: usize,
    mean: f64,
    factor: DMatrix<f64>,
}

impl DirectSampler {
    pub fn new(p: &ModelParams, n: usize) -> Result<Self> {
        if n > DIRECT_MAX_N {
            return Err(Error::OutOfRange(format!(
                "direct factorization is limited to n <= {DIRECT_MAX_N}, got {n}"
            )));
        }
        let size = 2 * n + 1;
        if size <= 2 * p.lambda.d() {
            return Err(Error::TorusTooSmall {
                size,
                d: p.lambda.d(),
            });
        }
        let nf = size as f64;
        let d = p.lambda.d() as i64;
        // Periodized Λ/N indexed by wrapped lag.
        let mut table = vec![0.0; size * size];
        for k in -d..=d {
            for l in -d..=d {
                table[wrap(k, size) * size + wrap(l, size)] += p.lambda.get(k, l) / nf;
            }
        }
        let dim = size * size;
        let cov = DMatrix::from_fn(dim, dim, |a, b| {
            let (ai, aj) = (a / size, a % size);
            let (bi, bj) = (b / size, b % size);
            let k = wrap(ai as i64 - bi as i64, size);
            let l = wrap(aj as i64 - bj as i64, size);
            table[k * size + l]
        });
        let factor = psd_factor(&cov, "weight field covariance")?;
        Ok(DirectSampler {
            n,
            mean: p.j_bar / nf,
            factor,
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> WeightField {
        let dim = self.factor.nrows();
        let z = DVector::<f64>::from_fn(dim, |_, _| rng.sample(StandardNormal));
        let x = &self.factor * z;
        WeightField {
            n: self.n,
            data: x.iter().map(|v| self.mean + v).collect(),
        }
    }
}

/// Per-draw moment estimates of a weight sampler over repeated draws.
///
/// Each draw contributes its position-averaged mean and, for every torus lag
/// `(k, l)` with `|k|, |l| ≤ n`, the position average of
/// `(J_{i+k,j+l} - μ)(J_{ij} - μ)` centred at the contract mean `μ = J̄/(2n+1)`.
/// Draws are independent, so the spread across draws gives honest standard errors.
#[derive(Debug, Clone)]
pub struct WeightMoments {
    pub n: usize,
    pub expected_mean: f64,
    pub mean: RunningMoments,
    /// Row-major over `k, l ∈ -n..=n`.
    pub lag_cov: Vec<RunningMoments>,
    /// `Λ(k, l)/(2n+1)` in the same layout.
    pub expected_cov: Vec<f64>,
}

impl WeightMoments {
    pub fn lag(&self, k: i64, l: i64) -> (&RunningMoments, f64) {
        let size = 2 * self.n + 1;
        let idx = (k + self.n as i64) as usize * size + (l + self.n as i64) as usize;
        (&self.lag_cov[idx], self.expected_cov[idx])
    }

    /// Largest |z| of the mean and every lag covariance against the contract.
    pub fn max_abs_z(&self) -> f64 {
        let z = |m: &RunningMoments, target: f64| z_against(m.mean - target, m.std_error());
        self.lag_cov
            .iter()
            .zip(&self.expected_cov)
            .map(|(m, &e)| z(m, e))
            .fold(z(&self.mean, self.expected_mean), f64::max)
    }

    /// Largest two-sample |z| between matching estimates of two samplers.
    pub fn max_abs_z_between(&self, other: &WeightMoments) -> f64 {
        let z = |a: &RunningMoments, b: &RunningMoments| {
            z_against(a.mean - b.mean, a.std_error().hypot(b.std_error()))
        };
        self.lag_cov
            .iter()
            .zip(&other.lag_cov)
            .map(|(a, b)| z(a, b))
            .fold(z(&self.mean, &other.mean), f64::max)
    }
}

fn z_against(diff: f64, se: f64) -> f64 {
    if diff.abs() < 1e-15 {
        0.0
    } else {
        diff.abs() / se
    }
}

/// Draws `draws` fields with `method`, draw `i` from stream `(seed, i, weights)`.
pub fn weight_moments(
    p: &ModelParams,
    n: usize,
    method: WeightMethod,
    draws: usize,
    seed: u64,
) -> Result<WeightMoments> {
    SimConfig {
        n,
        seed,
        weight_method: method,
    }
    .validate(p)?;
    let draw: Box<dyn Fn(&mut StreamRng) -> WeightField> = match method {
        WeightMethod::FftTorus => {
            let s = FftSampler::new(p, n)?;
            Box::new(move |rng| s.draw(rng))
        }
        WeightMethod::DirectFactorization => {
            let s = DirectSampler::new(p, n)?;
            Box::new(move |rng| s.draw(rng))
        }
    };
    let size = 2 * n + 1;
    let nf = size as f64;
    let mu = p.j_bar / nf;
    let lags = size * size;
    let mut mean = RunningMoments::default();
    let mut lag_cov = vec![RunningMoments::default(); lags];
    for i in 0..draws {
        let w = draw(&mut stream_rng(seed, i as u64, Stream::Weights));
        let x: Vec<f64> = w.as_slice().iter().map(|v| v - mu).collect();
        mean.push(mu + x.iter().sum::<f64>() / lags as f64);
        for (idx, acc) in lag_cov.iter_mut().enumerate() {
            let k = (idx / size) as i64 - n as i64;
            let l = (idx % size) as i64 - n as i64;
            let mut sum = 0.0;
            for a in 0..size {
                let row = wrap(a as i64 + k, size) * size;
                for b in 0..size {
                    sum += x[row + wrap(b as i64 + l, size)] * x[a * size + b];
                }
            }
            acc.push(sum / lags as f64);
        }
    }
    let expected_cov = (0..lags)
        .map(|idx| {
            let k = (idx / size) as i64 - n as i64;
            let l = (idx % size) as i64 - n as i64;
            p.lambda.get(k, l) / nf
        })
        .collect();
    Ok(WeightMoments {
        n,
        expected_mean: mu,
        mean,
        lag_cov,
        expected_cov,
    })
}
