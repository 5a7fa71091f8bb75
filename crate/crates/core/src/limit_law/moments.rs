//! Mean and moment integrals of the induction, each reduced to at most two
//! Gaussian dimensions times the initial-law factor(s).
//!
//! Conditional on the time-0 coordinate, `X_τ = Ψ⁻¹(v)_τ` is affine in the
//! Gaussian block `v_{1..τ}`, so a pair `(X_τ₁, X_τ₂)` is bivariate Gaussian
//! with moments obtained by contracting the inverse-map coefficients against
//! the marginal mean and covariance.

use crate::error::{Error, Result};
use crate::limit_law::LimitLaw;
use crate::model::{psi_inverse_coeffs, CovFunction, ModelParams};
use crate::quadrature::{
    check_variance, initial_atoms, Gaussian2, HermiteRule, QuadratureConfig, Whitened2,
};

/// Quadrature state shared by all entries of one computation.
#[derive(Debug, Clone)]
pub struct Integrator {
    rule: HermiteRule,
    atoms: Vec<(f64, f64)>,
    eps: f64,
}

impl Integrator {
    pub fn new(p: &ModelParams, q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        Ok(Integrator {
            rule: HermiteRule::new(q.nodes_gh),
            atoms: initial_atoms(&p.mu_init, q),
            eps: q.degenerate_variance_eps,
        })
    }
}

/// `X_τ = a0·v_0 + offset + Σ_j coeffs[j-1]·(v_j - c_j)`.
struct Reduced {
    a0: f64,
    offset: f64,
    coeffs: Vec<f64>,
}

fn reduce(law: &LimitLaw, tau: usize) -> Result<Reduced> {
    if tau > law.filled() {
        return Err(Error::OutOfRange(format!(
            "marginal up to time {tau} requested but only {} computed",
            law.filled()
        )));
    }
    let p = law.params();
    let (a, b) = psi_inverse_coeffs(tau, p.gamma, p.theta_bar);
    let coeffs = a[1..].to_vec();
    let offset = b + coeffs
        .iter()
        .enumerate()
        .map(|(j, &aj)| aj * law.c(j + 1))
        .sum::<f64>();
    Ok(Reduced {
        a0: a[0],
        offset,
        coeffs,
    })
}

/// `aᵀ (σ² Id + K^0) b` over the overlapping time ranges of `a` and `b`.
fn same_neuron_cov(law: &LimitLaw, a: &[f64], b: &[f64]) -> f64 {
    let sigma2 = law.sigma2();
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            let mut cov = law.k(0, i + 1, j + 1);
            if i == j {
                cov += sigma2;
            }
            total += ai * bj * cov;
        }
    }
    total
}

/// `aᵀ K^l b`, the covariance between neuron 0 and neuron `l`.
fn cross_neuron_cov(law: &LimitLaw, lag: i64, a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            total += ai * bj * law.k(lag, i + 1, j + 1);
        }
    }
    total
}

/// `c_s = J̄ E[f(Ψ⁻¹(v)_{s-1})]` under the single-neuron marginal up to `s-1`.
pub fn mean_entry(law: &LimitLaw, s: usize, integ: &Integrator) -> Result<f64> {
    check_time(law, s)?;
    let p = law.params();
    let x = reduce(law, s - 1)?;
    let var = check_variance(
        same_neuron_cov(law, &x.coeffs, &x.coeffs),
        &format!("reduced variance for c_{s}"),
    )?;
    let f = p.f;
    let mut total = 0.0;
    for &(v0, w) in &integ.atoms {
        let mean = x.a0 * v0 + x.offset;
        let e = if var <= integ.eps {
            f.eval(mean)
        } else {
            let sd = var.sqrt();
            integ
                .rule
                .nodes
                .iter()
                .zip(&integ.rule.weights)
                .map(|(&z, &wz)| wz * f.eval(mean + sd * z))
                .sum()
        };
        total += w * e;
    }
    Ok(p.j_bar * total)
}

/// `M^0_{r,s} = E[f(X_{r-1}) f(X_{s-1})]` for a single neuron.
pub fn moment_same(law: &LimitLaw, r: usize, s: usize, integ: &Integrator) -> Result<f64> {
    check_time(law, r)?;
    check_time(law, s)?;
    let f = law.params().f;
    let x1 = reduce(law, r - 1)?;
    if r == s {
        let var = check_variance(
            same_neuron_cov(law, &x1.coeffs, &x1.coeffs),
            &format!("reduced variance for M^0_{{{r},{r}}}"),
        )?;
        let mut total = 0.0;
        for &(v0, w) in &integ.atoms {
            let mean = x1.a0 * v0 + x1.offset;
            let e = if var <= integ.eps {
                f.eval(mean).powi(2)
            } else {
                let sd = var.sqrt();
                integ
                    .rule
                    .nodes
                    .iter()
                    .zip(&integ.rule.weights)
                    .map(|(&z, &wz)| wz * f.eval(mean + sd * z).powi(2))
                    .sum()
            };
            total += w * e;
        }
        return Ok(total);
    }
    let x2 = reduce(law, s - 1)?;
    let gauss = Gaussian2 {
        mean: [0.0, 0.0],
        v11: same_neuron_cov(law, &x1.coeffs, &x1.coeffs),
        v22: same_neuron_cov(law, &x2.coeffs, &x2.coeffs),
        v12: same_neuron_cov(law, &x1.coeffs, &x2.coeffs),
    };
    let white = Whitened2::new(&gauss, integ.eps, &format!("reduced covariance for M^0_{{{r},{s}}}"))?;
    let mut total = 0.0;
    for &(v0, w) in &integ.atoms {
        let mean = [x1.a0 * v0 + x1.offset, x2.a0 * v0 + x2.offset];
        total += w * white.expect(mean, &integ.rule, |a, b| f.eval(a) * f.eval(b));
    }
    Ok(total)
}

/// `M^l_{r,s} = E[f(X^0_{r-1}) f(X^l_{s-1})]` under the pair marginal of
/// neurons `0` and `l ≠ 0`; the two time-0 coordinates are independent.
pub fn moment_cross(
    law: &LimitLaw,
    lag: i64,
    r: usize,
    s: usize,
    integ: &Integrator,
) -> Result<f64> {
    if lag == 0 {
        return Err(Error::OutOfRange("moment_cross needs a nonzero lag".into()));
    }
    check_time(law, r)?;
    check_time(law, s)?;
    let f = law.params().f;
    let x1 = reduce(law, r - 1)?;
    let x2 = reduce(law, s - 1)?;
    let gauss = Gaussian2 {
        mean: [0.0, 0.0],
        v11: same_neuron_cov(law, &x1.coeffs, &x1.coeffs),
        v22: same_neuron_cov(law, &x2.coeffs, &x2.coeffs),
        v12: cross_neuron_cov(law, lag, &x1.coeffs, &x2.coeffs),
    };
    let white = Whitened2::new(
        &gauss,
        integ.eps,
        &format!("reduced covariance for M^{lag}_{{{r},{s}}}"),
    )?;
    let mut total = 0.0;
    for &(v0, w0) in &integ.atoms {
        let m1 = x1.a0 * v0 + x1.offset;
        for &(vl, wl) in &integ.atoms {
            let mean = [m1, x2.a0 * vl + x2.offset];
            total += w0 * wl * white.expect(mean, &integ.rule, |a, b| f.eval(a) * f.eval(b));
        }
    }
    Ok(total)
}

fn check_time(law: &LimitLaw, s: usize) -> Result<()> {
    if s == 0 || s > law.horizon() {
        return Err(Error::OutOfRange(format!(
            "time {s} outside 1..={}",
            law.horizon()
        )));
    }
    Ok(())
}

/// `K^k_{r,s} = θ²·[k=0] + Σ_l Λ(k,l) M^l_{r,s}`, summed over the finite
/// support of `Λ` in increasing `l`. `moment(l)` returns `M^l_{r,s}` if known.
pub fn assemble_k(
    lambda: &CovFunction,
    theta2: f64,
    k: i64,
    r: usize,
    s: usize,
    moment: impl Fn(i64) -> Option<f64>,
) -> Result<f64> {
    let d = lambda.d() as i64;
    let mut total = if k == 0 { theta2 } else { 0.0 };
    if k.abs() > d {
        return Ok(total);
    }
    for l in -d..=d {
        let weight = lambda.get(k, l);
        if weight == 0.0 {
            continue;
        }
        let m = moment(l).ok_or(Error::MissingMoment { lag: l, r, s })?;
        total += weight * m;
    }
    Ok(total)
}
