use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, SigmoidSpec};
use crate::network::WeightMethod;
use crate::window::{Window, WindowFunctional};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Averaged,
    Quenched,
    Ergodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mean,
    Covariance,
    Ks,
    TestFunctions,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Mean, Metric::Covariance, Metric::Ks, Metric::TestFunctions];
}

fn all_metrics() -> Vec<Metric> {
    Metric::ALL.to_vec()
}

/// A bounded window functional that can be named in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Constant {
        value: f64,
    },
    /// `Π_o f(u^o_t)` over the listed offsets; `t` defaults to the horizon.
    RateProduct {
        offsets: Vec<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<usize>,
    },
}

impl TestFunction {
    /// Smallest window radius containing every offset.
    pub fn radius(&self) -> usize {
        match self {
            TestFunction::Constant { .. } => 0,
            TestFunction::RateProduct { offsets, .. } => {
                offsets.iter().map(|o| o.unsigned_abs() as usize).max().unwrap_or(0)
            }
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            TestFunction::Constant { value } if !value.is_finite() => {
                Err(Error::InvalidPlan("constant test function must be finite".into()))
            }
            TestFunction::RateProduct { offsets, .. } if offsets.is_empty() => {
                Err(Error::InvalidPlan("rate_product needs at least one offset".into()))
            }
            TestFunction::RateProduct { time: Some(t), .. } if *t > horizon => Err(
                Error::InvalidPlan(format!("test function time {t} exceeds horizon {horizon}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn bind(&self, f: SigmoidSpec) -> BoundTestFunction<'_> {
        BoundTestFunction { h: self, f }
    }
}

impl std::fmt::Display for TestFunction {
    fn fmt(&self, out: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestFunction::Constant { value } => write!(out, "const({value})"),
            TestFunction::RateProduct { offsets, time } => {
                let t = time.map_or("T".to_string(), |t| t.to_string());
                let parts: Vec<String> = offsets.iter().map(|o| format!("f(u[{o}][{t}])")).collect();
                write!(out, "{}", parts.join("*"))
            }
        }
    }
}

/// A [`TestFunction`] paired with the model's sigmoid.
#[derive(Debug, Clone, Copy)]
pub struct BoundTestFunction<'a> {
    h: &'a TestFunction,
    f: SigmoidSpec,
}

impl WindowFunctional for BoundTestFunction<'_> {
    fn eval(&self, w: &Window) -> f64 {
        match self.h {
            TestFunction::Constant { value } => *value,
            TestFunction::RateProduct { offsets, time } => {
                let t = time.unwrap_or(w.horizon());
                offsets.iter().map(|&o| self.f.eval(w.get(o, t))).product()
            }
        }
    }
}

/// Over many weight draws at each size, the fraction whose sup-norm mean
/// error exceeds `factor × (median error at anchor_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePlan {
    pub n_list: Vec<usize>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_factor")]
    pub factor: f64,
    /// Defaults to the largest size in `n_list`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_n: Option<usize>,
}

fn default_draws() -> usize {
    200
}

fn default_factor() -> f64 {
    1.0
}

impl ExceedancePlan {
    pub fn anchor(&self) -> usize {
        self.anchor_n
            .unwrap_or_else(|| self.n_list.iter().copied().max().unwrap_or(0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicPlan {
    pub h: TestFunction,
    /// Window radius; defaults to the radius of `h`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl ErgodicPlan {
    pub fn radius(&self) -> usize {
        self.m.unwrap_or_else(|| self.h.radius())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    pub trials_per_n: usize,
    pub seed: u64,
    #[serde(default = "all_metrics")]
    pub metrics: Vec<Metric>,
    #[serde(default)]
    pub weight_method: WeightMethod,
    /// Largest covariance lag compared; defaults to `d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default)]
    pub test_functions: Vec<TestFunction>,
    /// Monte Carlo size for limit-law expectations of test functions.
    #[serde(default = "default_limit_samples")]
    pub limit_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exceedance: Option<ExceedancePlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ergodic: Option<ErgodicPlan>,
}

fn default_limit_samples() -> usize {
    1_000_000
}

impl ExperimentPlan {
    pub fn new(experiment: Experiment, n_list: Vec<usize>, trials_per_n: usize, seed: u64) -> Self {
        ExperimentPlan {
            experiment,
            n_list,
            trials_per_n,
            seed,
            metrics: all_metrics(),
            weight_method: WeightMethod::default(),
            k_max: None,
            test_functions: Vec::new(),
            limit_samples: default_limit_samples(),
            exceedance: None,
            ergodic: None,
        }
    }

    pub fn wants(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    pub fn k_max(&self, p: &ModelParams) -> usize {
        self.k_max.unwrap_or(p.lambda.d())
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidPlan(msg));
        check_sizes("n_list", &self.n_list, p)?;
        if self.trials_per_n == 0 {
            return fail("trials_per_n must be at least 1".into());
        }
        if self.limit_samples < 100 {
            return fail(format!("limit_samples must be at least 100, got {}", self.limit_samples));
        }
        let smallest = self.n_list[0];
        if self.k_max(p) > smallest {
            return fail(format!("k_max {} exceeds smallest n {smallest}", self.k_max(p)));
        }
        for h in &self.test_functions {
            h.validate(p.horizon_t)?;
            if h.radius() > smallest {
                return fail(format!("test function {h} needs n >= {}", h.radius()));
            }
        }
        if let Some(ex) = &self.exceedance {
            check_sizes("exceedance.n_list", &ex.n_list, p)?;
            if ex.draws == 0 {
                return fail("exceedance.draws must be at least 1".into());
            }
            if !(ex.factor > 0.0 && ex.factor.is_finite()) {
                return fail("exceedance.factor must be positive".into());
            }
            if !ex.n_list.contains(&ex.anchor()) {
                return fail(format!("exceedance anchor {} is not in its n_list", ex.anchor()));
            }
        }
        if let Some(erg) = &self.ergodic {
            erg.h.validate(p.horizon_t)?;
            if erg.radius() < erg.h.radius() {
                return fail(format!("window radius {} is smaller than the test function's", erg.radius()));
            }
            if erg.radius() > smallest {
                return fail(format!("window radius {} exceeds smallest n {smallest}", erg.radius()));
            }
        }
        if self.experiment == Experiment::Ergodic && self.ergodic.is_none() {
            return fail("ergodic experiment needs an `ergodic` section".into());
        }
        Ok(())
    }
}

fn check_sizes(name: &str, sizes: &[usize], p: &ModelParams) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::InvalidPlan(format!("{name} is empty")));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidPlan(format!("{name} must be strictly increasing")));
    }
    let d = p.lambda.d();
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || 2 * n + 1 <= 2 * d) {
        return Err(Error::InvalidPlan(format!("{name}: n={n} is too small for correlation radius {d}")));
    }
    Ok(())
}
