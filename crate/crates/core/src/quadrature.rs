//! Gauss–Hermite rules and expectations of smooth functions of Gaussian
//! vectors of dimension at most two.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ROUNDOFF_TOL;
use crate::model::InitialLaw;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    #[serde(default = "default_nodes")]
    pub nodes_gh: usize,
    #[serde(default = "default_nodes")]
    pub init_nodes: usize,
    #[serde(default = "default_eps")]
    pub degenerate_variance_eps: f64,
}

fn default_nodes() -> usize {
    32
}

fn default_eps() -> f64 {
    1e-14
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_gh: default_nodes(),
            init_nodes: default_nodes(),
            degenerate_variance_eps: default_eps(),
        }
    }
}

impl QuadratureConfig {
    pub fn with_nodes(nodes_gh: usize) -> Self {
        QuadratureConfig {
            nodes_gh,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_gh < 2 || self.init_nodes < 2 {
            return Err(Error::InvalidParams(vec![format!(
                "quadrature node counts must be >= 2 (nodes_gh={}, init_nodes={})",
                self.nodes_gh, self.init_nodes
            )]));
        }
        if !(self.degenerate_variance_eps >= 0.0) {
            return Err(Error::InvalidParams(vec![
                "degenerate_variance_eps must be >= 0".into()
            ]));
        }
        Ok(())
    }
}

/// Probabilists' Gauss–Hermite rule: `E[g(Z)] ≈ Σ w_i g(x_i)` for `Z ~ N(0,1)`.
#[derive(Debug, Clone)]
pub struct HermiteRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HermiteRule {
    /// Golub–Welsch starting values polished by Newton steps on the
    /// orthonormal Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for i in 1..n {
            let b = (i as f64 / 2.0).sqrt();
            jacobi[(i, i - 1)] = b;
            jacobi[(i - 1, i)] = b;
        }
        let mut roots: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
        roots.sort_by(f64::total_cmp);

        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for mut x in roots {
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (p, dp) = orthonormal_hermite(n, x);
                deriv = dp;
                let dx = p / dp;
                x -= dx;
                if dx.abs() <= 1e-15 * (1.0 + x.abs()) {
                    break;
                }
            }
            let (_, dp) = orthonormal_hermite(n, x);
            if dp.is_finite() {
                deriv = dp;
            }
            // Physicists' weight 2 / p'_n(x)^2, rescaled to the standard normal.
            nodes.push(x * std::f64::consts::SQRT_2);
            weights.push(2.0 / (deriv * deriv) / std::f64::consts::PI.sqrt());
        }
        HermiteRule { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Value and derivative of the orthonormal Hermite polynomial of degree `n`
/// (weight `e^{-x²}`).
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = std::f64::consts::PI.powf(-0.25);
    let mut p2 = 0.0;
    for j in 1..=n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = x * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
    }
    (p1, (2.0 * n as f64).sqrt() * p2)
}

/// Bivariate Gaussian with mean `mean` and covariance `[[v11, v12], [v12, v22]]`.
#[derive(Debug, Clone, Copy)]
pub struct Gaussian2 {
    pub mean: [f64; 2],
    pub v11: f64,
    pub v22: f64,
    pub v12: f64,
}

/// Whitened representation `X = mean + Σ_k sqrt(λ_k) e_k Z_k`, keeping only
/// directions whose variance exceeds the degeneracy threshold.
#[derive(Debug, Clone)]
pub(crate) struct Whitened2 {
    directions: Vec<[f64; 2]>,
}

pub(crate) fn check_variance(var: f64, context: &str) -> Result<f64> {
    if var < -ROUNDOFF_TOL || var.is_nan() {
        return Err(Error::NotPsd {
            context: context.to_string(),
            min_eig: var,
        });
    }
    Ok(var.max(0.0))
}

impl Whitened2 {
    pub(crate) fn new(g: &Gaussian2, eps: f64, context: &str) -> Result<Self> {
        let (a, b, c) = (g.v11, g.v22, g.v12);
        let half_tr = 0.5 * (a + b);
        let disc = (0.25 * (a - b) * (a - b) + c * c).sqrt();
        let lam_hi = half_tr + disc;
        let lam_lo = half_tr - disc;
        let lam_lo = check_variance(lam_lo, context)?;
        let lam_hi = check_variance(lam_hi, context)?;

        // Unit eigenvector for lam_hi; the other is its rotation.
        let e_hi = if c.abs() > 0.0 {
            let (x, y) = (lam_hi - b, c);
            let norm = x.hypot(y);
            [x / norm, y / norm]
        } else if a >= b {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        let e_lo = [-e_hi[1], e_hi[0]];

        let mut directions = Vec::with_capacity(2);
        for (lam, e) in [(lam_hi, e_hi), (lam_lo, e_lo)] {
            if lam > eps {
                let s = lam.sqrt();
                directions.push([s * e[0], s * e[1]]);
            }
        }
        Ok(Whitened2 { directions })
    }

    #[cfg(test)]
    pub(crate) fn dims(&self) -> usize {
        self.directions.len()
    }

    /// `E[g(X₁, X₂)]` with mean `mean` and this whitening, using tensor Hermite rules.
    #[inline]
    pub(crate) fn expect(
        &self,
        mean: [f64; 2],
        rule: &HermiteRule,
        mut g: impl FnMut(f64, f64) -> f64,
    ) -> f64 {
        match self.directions.as_slice() {
            [] => g(mean[0], mean[1]),
            [d] => rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&z, &w)| w * g(mean[0] + d[0] * z, mean[1] + d[1] * z))
                .sum(),
            [d1, d2] => {
                let mut total = 0.0;
                for (&z1, &w1) in rule.nodes.iter().zip(&rule.weights) {
                    let x = mean[0] + d1[0] * z1;
                    let y = mean[1] + d1[1] * z1;
                    let mut inner = 0.0;
                    for (&z2, &w2) in rule.nodes.iter().zip(&rule.weights) {
                        inner += w2 * g(x + d2[0] * z2, y + d2[1] * z2);
                    }
                    total += w1 * inner;
                }
                total
            }
            _ => unreachable!(),
        }
    }
}

/// `E[g(X)]` for scalar `X ~ N(mean, var)`; a point evaluation if `var ≤ eps`.
pub fn expect_1d(
    mean: f64,
    var: f64,
    eps: f64,
    rule: &HermiteRule,
    g: impl Fn(f64) -> f64,
    context: &str,
) -> Result<f64> {
    let var = check_variance(var, context)?;
    if var <= eps {
        return Ok(g(mean));
    }
    let s = var.sqrt();
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&z, &w)| w * g(mean + s * z))
        .sum())
}

/// `E[g(X₁, X₂)]` for a bivariate Gaussian, whitened by its eigendecomposition.
pub fn expect_2d(
    gauss: &Gaussian2,
    eps: f64,
    rule: &HermiteRule,
    g: impl FnMut(f64, f64) -> f64,
    context: &str,
) -> Result<f64> {
    let w = Whitened2::new(gauss, eps, context)?;
    Ok(w.expect(gauss.mean, rule, g))
}

/// Quadrature atoms `(value, weight)` for the initial law.
pub fn initial_atoms(law: &InitialLaw, q: &QuadratureConfig) -> Vec<(f64, f64)> {
    match law {
        InitialLaw::PointMass { u0 } => vec![(*u0, 1.0)],
        InitialLaw::Discrete { atoms, weights } => atoms
            .iter()
            .copied()
            .zip(weights.iter().copied())
            .filter(|&(_, w)| w > 0.0)
            .collect(),
        InitialLaw::Gaussian { mean, variance } => {
            if *variance <= q.degenerate_variance_eps {
                return vec![(*mean, 1.0)];
            }
            let rule = HermiteRule::new(q.init_nodes);
            let s = variance.sqrt();
            rule.nodes
                .iter()
                .zip(&rule.weights)
                .map(|(&z, &w)| (mean + s * z, w))
                .collect()
        }
    }
}
