//! Model parameters, the affine trajectory change of coordinates, and the
//! weight covariance function.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{fft2, wrap};

/// Spectral values above this are accepted as nonnegative.
pub const SPECTRAL_TOL: f64 = 1e-10;

/// Covariance function of the stationary weight field, with finite support
/// `[-d, d]²`. Values are stored row-major with `(k, l) -> (k + d, l + d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CovFunctionRepr", into = "CovFunctionRepr")]
pub struct CovFunction {
    d: usize,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CovFunctionRepr {
    d: usize,
    values: Vec<f64>,
}

impl TryFrom<CovFunctionRepr> for CovFunction {
    type Error = Error;

    fn try_from(raw: CovFunctionRepr) -> Result<Self> {
        let side = 2 * raw.d + 1;
        if raw.values.len() != side * side {
            return Err(Error::Format(format!(
                "lambda.values must hold (2d+1)^2 = {} entries, got {}",
                side * side,
                raw.values.len()
            )));
        }
        // Symmetry is left to `validate_params` so that every violation is reported together.
        Ok(CovFunction {
            d: raw.d,
            values: raw.values,
        })
    }
}

impl From<CovFunction> for CovFunctionRepr {
    fn from(c: CovFunction) -> Self {
        CovFunctionRepr {
            d: c.d,
            values: c.values,
        }
    }
}

impl CovFunction {
    /// Builds from a row-major `(2d+1)²` table; rejects tables that break point symmetry.
    pub fn new(d: usize, values: Vec<f64>) -> Result<Self> {
        let c = CovFunction::try_from(CovFunctionRepr { d, values })?;
        let v = c.violations();
        if v.is_empty() {
            Ok(c)
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    pub fn zero() -> Self {
        CovFunction {
            d: 0,
            values: vec![0.0],
        }
    }

    /// `Λ(k, l) = λ(k) λ(l)` for a symmetric 1D profile of odd length `2d+1`.
    pub fn separable(profile: &[f64]) -> Result<Self> {
        if profile.len() % 2 == 0 {
            return Err(Error::Format("separable profile needs odd length".into()));
        }
        let d = profile.len() / 2;
        let values = profile
            .iter()
            .flat_map(|&a| profile.iter().map(move |&b| a * b))
            .collect();
        CovFunction::new(d, values)
    }

    /// Builds a table from a closure over lags in `[-d, d]²`.
    pub fn from_fn(d: usize, f: impl Fn(i64, i64) -> f64) -> Result<Self> {
        let di = d as i64;
        let mut values = Vec::with_capacity((2 * d + 1).pow(2));
        for k in -di..=di {
            for l in -di..=di {
                values.push(f(k, l));
            }
        }
        CovFunction::new(d, values)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `Λ(k, l)`, zero outside the support.
    pub fn get(&self, k: i64, l: i64) -> f64 {
        let d = self.d as i64;
        if k.abs() > d || l.abs() > d {
            return 0.0;
        }
        let side = 2 * self.d + 1;
        self.values[(k + d) as usize * side + (l + d) as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Largest `|l|` with `Λ(k, l) ≠ 0` for some `k`; zero for the null function.
    pub fn moment_lag_radius(&self) -> usize {
        let d = self.d as i64;
        let mut radius = 0;
        for k in -d..=d {
            for l in -d..=d {
                if self.get(k, l) != 0.0 {
                    radius = radius.max(l.unsigned_abs() as usize);
                }
            }
        }
        radius
    }

    /// Names every broken invariant of the table itself (finiteness, point symmetry).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.values.iter().any(|v| !v.is_finite()) {
            out.push("Λ has non-finite entries".to_string());
        }
        let d = self.d as i64;
        'outer: for k in -d..=d {
            for l in -d..=d {
                let a = self.get(k, l);
                let b = self.get(-k, -l);
                if (a - b).abs() > 1e-15 * (1.0 + a.abs().max(b.abs())) {
                    out.push(format!(
                        "Λ point-symmetry violated: Λ({k},{l})={a} but Λ({},{})={b}",
                        -k, -l
                    ));
                    break 'outer;
                }
            }
        }
        out
    }
}

/// Outcome of the spectral validity test of a covariance table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCheck {
    pub passed: bool,
    pub min_value: f64,
}

/// Real parts of the 2D DFT of `Λ` periodized on an `size × size` torus.
pub fn lambda_spectrum(lambda: &CovFunction, size: usize) -> Result<Vec<f64>> {
    if size <= 2 * lambda.d() {
        return Err(Error::TorusTooSmall {
            size,
            d: lambda.d(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); size * size];
    let d = lambda.d() as i64;
    for k in -d..=d {
        for l in -d..=d {
            buf[wrap(k, size) * size + wrap(l, size)] += lambda.get(k, l);
        }
    }
    fft2(&mut buf, size, FftDirection::Forward);
    Ok(buf.iter().map(|z| z.re).collect())
}

/// Passes iff the smallest spectral value on the torus is `≥ -1e-10`.
pub fn lambda_psd_check(lambda: &CovFunction, torus_size: usize) -> Result<SpectralCheck> {
    if torus_size % 2 == 0 {
        return Err(Error::OutOfRange(format!(
            "torus size must be odd, got {torus_size}"
        )));
    }
    let spectrum = lambda_spectrum(lambda, torus_size)?;
    let min_value = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(SpectralCheck {
        passed: min_value >= -SPECTRAL_TOL,
        min_value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidFamily {
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidSpec {
    #[serde(default = "default_family")]
    pub family: SigmoidFamily,
    pub slope: f64,
}

fn default_family() -> SigmoidFamily {
    SigmoidFamily::Logistic
}

impl SigmoidSpec {
    pub fn logistic(slope: f64) -> Self {
        SigmoidSpec {
            family: SigmoidFamily::Logistic,
            slope,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.family {
            SigmoidFamily::Logistic => {
                let z = self.slope * x;
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self.family {
            SigmoidFamily::Logistic => self.slope / 4.0,
        }
    }
}

impl Default for SigmoidSpec {
    fn default() -> Self {
        SigmoidSpec::logistic(1.0)
    }
}

/// Law of the initial membrane potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    PointMass { u0: f64 },
    Gaussian { mean: f64, variance: f64 },
    Discrete { atoms: Vec<f64>, weights: Vec<f64> },
}

impl InitialLaw {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            InitialLaw::PointMass { u0 } => {
                if !u0.is_finite() {
                    out.push("mu_init point mass is not finite".into());
                }
            }
            InitialLaw::Gaussian { mean, variance } => {
                if !mean.is_finite() {
                    out.push("mu_init mean is not finite".into());
                }
                if !(*variance >= 0.0) || !variance.is_finite() {
                    out.push(format!("mu_init variance must be >= 0, got {variance}"));
                }
            }
            InitialLaw::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    out.push("mu_init atoms and weights must be nonempty and of equal length".into());
                }
                if atoms.iter().any(|a| !a.is_finite()) {
                    out.push("mu_init has non-finite atoms".into());
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    out.push("mu_init weights must be nonnegative".into());
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    out.push(format!("mu_init weights sum to {total}, not 1"));
                }
            }
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InitialLaw::PointMass { u0 } => *u0,
            InitialLaw::Gaussian { mean, variance } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                mean + variance.sqrt() * z
            }
            InitialLaw::Discrete { atoms, weights } => {
                let x: f64 = rng.random();
                let mut acc = 0.0;
                for (a, w) in atoms.iter().zip(weights) {
                    acc += w;
                    if x < acc {
                        return *a;
                    }
                }
                *atoms.last().expect("validated nonempty")
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            InitialLaw::PointMass { u0 } => *u0,
            InitialLaw::Gaussian { mean, .. } => *mean,
            InitialLaw::Discrete { atoms, weights } => {
                atoms.iter().zip(weights).map(|(a, w)| a * w).sum()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub gamma: f64,
    pub sigma2: f64,
    pub theta_bar: f64,
    pub theta2: f64,
    pub j_bar: f64,
    pub lambda: CovFunction,
    pub f: SigmoidSpec,
    pub mu_init: InitialLaw,
    #[serde(rename = "horizon_T")]
    pub horizon_t: usize,
}

impl ModelParams {
    /// The decoupled configuration: no mean coupling, no weight variance, no input variance.
    pub fn decoupled(gamma: f64, sigma2: f64, theta_bar: f64, horizon_t: usize) -> Self {
        ModelParams {
            gamma,
            sigma2,
            theta_bar,
            theta2: 0.0,
            j_bar: 0.0,
            lambda: CovFunction::zero(),
            f: SigmoidSpec::default(),
            mu_init: InitialLaw::PointMass { u0: 0.0 },
            horizon_t,
        }
    }

    pub fn is_decoupled(&self) -> bool {
        self.j_bar == 0.0 && self.theta2 == 0.0 && self.lambda.is_zero()
    }

    pub fn validate(self) -> Result<Self> {
        validate_params(self)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.horizon_t + 1 {
            return Err(Error::LengthMismatch {
                expected: self.horizon_t + 1,
                got: len,
            });
        }
        Ok(())
    }

    pub fn psi_forward(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        Ok(psi_forward(u, self.gamma, self.theta_bar))
    }

    pub fn psi_inverse(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(v.len())?;
        Ok(psi_inverse(v, self.gamma, self.theta_bar))
    }

    pub fn psi_inverse_coeffs(&self, t: usize) -> Result<(Vec<f64>, f64)> {
        if t > self.horizon_t {
            return Err(Error::OutOfRange(format!(
                "time {t} beyond horizon {}",
                self.horizon_t
            )));
        }
        Ok(psi_inverse_coeffs(t, self.gamma, self.theta_bar))
    }
}

/// Smallest torus used to test spectral validity when no network size is fixed yet.
fn validation_torus(d: usize) -> usize {
    (16 * (2 * d + 1) + 1).max(129)
}

/// Checks every invariant and reports all violations together.
pub fn validate_params(p: ModelParams) -> Result<ModelParams> {
    let mut v = Vec::new();
    if !(p.gamma >= 0.0 && p.gamma < 1.0) {
        v.push(format!("gamma out of [0,1): {}", p.gamma));
    }
    if !(p.sigma2 > 0.0) || !p.sigma2.is_finite() {
        v.push(format!("sigma2 must be > 0: {}", p.sigma2));
    }
    if !p.theta_bar.is_finite() {
        v.push("theta_bar is not finite".into());
    }
    if !(p.theta2 >= 0.0) || !p.theta2.is_finite() {
        v.push(format!("theta2 must be >= 0: {}", p.theta2));
    }
    if !p.j_bar.is_finite() {
        v.push("j_bar is not finite".into());
    }
    if p.horizon_t < 1 {
        v.push("horizon_T must be >= 1".into());
    }
    if !(p.f.slope > 0.0) || !p.f.slope.is_finite() {
        v.push(format!("sigmoid slope must be > 0: {}", p.f.slope));
    }
    v.extend(p.mu_init.violations());
    let lambda_issues = p.lambda.violations();
    let lambda_ok = lambda_issues.is_empty();
    v.extend(lambda_issues);
    if lambda_ok {
        let check = lambda_psd_check(&p.lambda, validation_torus(p.lambda.d()))?;
        if !check.passed {
            v.push(format!(
                "Λ spectrally invalid: min spectral value {:e}",
                check.min_value
            ));
        }
    }
    if v.is_empty() {
        Ok(p)
    } else {
        Err(Error::InvalidParams(v))
    }
}

/// `v_0 = u_0`, `v_s = u_s - γ u_{s-1} - θ̄`.
pub fn psi_forward(u: &[f64], gamma: f64, theta_bar: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(u.len());
    if let Some(&u0) = u.first() {
        v.push(u0);
    }
    v.extend(u.windows(2).map(|w| (-gamma).mul_add(w[0], w[1]) - theta_bar));
    v
}

/// Inverse of [`psi_forward`]: `u_t = Σ_{i≤t} γ^i v_{t-i} + θ̄ (γ^t - 1)/(γ - 1)`,
/// evaluated in nested form `u_t = γ u_{t-1} + v_t + θ̄`.
pub fn psi_inverse(v: &[f64], gamma: f64, theta_bar: f64) -> Vec<f64> {
    let mut u = Vec::with_capacity(v.len());
    if let Some(&v0) = v.first() {
        u.push(v0);
    }
    for &vt in v.iter().skip(1) {
        let prev = *u.last().expect("seeded with v_0");
        u.push(gamma.mul_add(prev, vt + theta_bar));
    }
    u
}

/// Coefficients `(a_0..a_t, b)` with `Ψ⁻¹(v)_t = Σ_j a_j v_j + b`.
pub fn psi_inverse_coeffs(t: usize, gamma: f64, theta_bar: f64) -> (Vec<f64>, f64) {
    let a = (0..=t).map(|j| gamma.powi((t - j) as i32)).collect();
    let b = if t == 0 {
        0.0
    } else {
        theta_bar * (gamma.powi(t as i32) - 1.0) / (gamma - 1.0)
    };
    (a, b)
}

/// Draws `θ ~ N(θ̄, θ²)`.
pub fn sample_input<R: Rng + ?Sized>(p: &ModelParams, rng: &mut R) -> f64 {
    if p.theta2 == 0.0 {
        return p.theta_bar;
    }
    Normal::new(p.theta_bar, p.theta2.sqrt())
        .expect("validated theta2")
        .sample(rng)
}
