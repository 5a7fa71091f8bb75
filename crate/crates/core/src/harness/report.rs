use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::plan::Experiment;
use crate::limit_law::{LimitLaw, OracleEstimate};
use crate::network::EmpiricalStats;
use crate::stats::{iqr, ks_p_value, ks_statistic_normal, median};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub time: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Distances between one network realization and the limit law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub n: usize,
    pub trial: u64,
    /// `max_s |c_hat_s - c_s|`.
    pub mean_error: Option<f64>,
    /// `max_{r,s} |K_hat^k_{rs} - σ²[k=0]δ_{rs} - K^k_{rs}|` for `k = 0..`.
    pub cov_errors: Vec<f64>,
    /// Per-time KS tests of the v-marginal against `N(c_s, σ² + K^0_{ss})`.
    pub ks: Vec<KsResult>,
    /// `|empirical h - limit h|`, one per configured test function.
    pub test_gaps: Vec<f64>,
}

impl DistanceRecord {
    /// Flattened `(metric, value)` pairs in a fixed order.
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(e) = self.mean_error {
            out.push(("mean_error".to_string(), e));
        }
        for (k, e) in self.cov_errors.iter().enumerate() {
            out.push((format!("cov_error_k{k}"), *e));
        }
        for ks in &self.ks {
            out.push((format!("ks_stat_t{}", ks.time), ks.statistic));
            out.push((format!("ks_p_t{}", ks.time), ks.p_value));
        }
        for (i, g) in self.test_gaps.iter().enumerate() {
            out.push((format!("test_gap_{i}"), *g));
        }
        out
    }
}

/// Computes every distance of `stats` against `law`.
///
/// KS p-values use the effective sample size `(2n+1)/(2d+1)` to discount
/// correlations between neighbouring neurons.
pub fn distance_report(stats: &EmpiricalStats, law: &LimitLaw, n: usize) -> Result<DistanceRecord> {
    let horizon = law.horizon();
    if stats.horizon != horizon || stats.c_hat.len() != horizon {
        return Err(Error::Shape(format!(
            "statistics cover {} times, limit law {horizon}",
            stats.horizon
        )));
    }
    if stats.n != n {
        return Err(Error::Shape(format!("statistics are for n={}, expected {n}", stats.n)));
    }
    if stats.k_hat.iter().any(|m| m.nrows() != horizon || m.ncols() != horizon) {
        return Err(Error::Shape("covariance block has the wrong size".into()));
    }
    let sigma2 = law.sigma2();
    let mean_error = (1..=horizon)
        .map(|s| (stats.c_hat[s - 1] - law.c(s)).abs())
        .fold(0.0, f64::max);
    let cov_errors = stats
        .k_hat
        .iter()
        .enumerate()
        .map(|(k, block)| {
            let mut worst: f64 = 0.0;
            for r in 1..=horizon {
                for s in 1..=horizon {
                    let noise = if k == 0 && r == s { sigma2 } else { 0.0 };
                    let target = noise + law.k(k as i64, r, s);
                    worst = worst.max((block[(r - 1, s - 1)] - target).abs());
                }
            }
            worst
        })
        .collect();
    let effective_n = (2 * n + 1) as f64 / (2 * law.d() + 1) as f64;
    let ks = if stats.pools.len() == horizon {
        (1..=horizon)
            .map(|s| {
                let var = sigma2 + law.k(0, s, s);
                let statistic = ks_statistic_normal(&stats.pools[s - 1], law.c(s), var);
                KsResult {
                    time: s,
                    statistic,
                    p_value: ks_p_value(statistic, effective_n),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(DistanceRecord {
        n,
        trial: 0,
        mean_error: Some(mean_error),
        cov_errors,
        ks,
        test_gaps: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub n: usize,
    pub metric: String,
    pub median: f64,
    pub iqr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitValue {
    pub test_function: String,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRecord {
    pub n: usize,
    pub draws: usize,
    pub epsilon: f64,
    pub exceed: usize,
    pub fraction: f64,
    pub median_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicRecord {
    pub n: usize,
    pub empirical: f64,
    pub path_stderr: f64,
    pub limit: OracleEstimate,
    pub gap: f64,
    pub combined_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub experiment: Experiment,
    pub n_list: Vec<usize>,
    pub records: Vec<DistanceRecord>,
    pub summaries: Vec<MetricSummary>,
    #[serde(default)]
    pub limit_values: Vec<LimitValue>,
    #[serde(default)]
    pub exceedance: Vec<ExceedanceRecord>,
    #[serde(default)]
    pub ergodic: Vec<ErgodicRecord>,
    #[serde(default)]
    pub checks: Vec<Check>,
}

impl DistanceReport {
    pub fn new(experiment: Experiment, n_list: Vec<usize>, records: Vec<DistanceRecord>) -> Self {
        let summaries = summarize(&n_list, &records);
        DistanceReport {
            experiment,
            n_list,
            records,
            summaries,
            limit_values: Vec::new(),
            exceedance: Vec::new(),
            ergodic: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn summary(&self, n: usize, metric: &str) -> Option<&MetricSummary> {
        self.summaries.iter().find(|s| s.n == n && s.metric == metric)
    }

    /// Medians of `metric` in `n_list` order.
    pub fn medians(&self, metric: &str) -> Vec<f64> {
        self.n_list
            .iter()
            .filter_map(|&n| self.summary(n, metric).map(|s| s.median))
            .collect()
    }

    pub fn values(&self, n: usize, metric: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.n == n)
            .flat_map(|r| r.rows())
            .filter(|(name, _)| name == metric)
            .map(|(_, v)| v)
            .collect()
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One row per `(n, trial, metric)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,trial,metric,value\n");
        for rec in &self.records {
            for (metric, value) in rec.rows() {
                let _ = writeln!(out, "{},{},{metric},{value}", rec.n, rec.trial);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Two-column `x y` text files keyed by file name: per-metric medians
    /// against `2n+1`, exceedance fractions and ergodic gaps.
    pub fn plot_files(&self) -> Vec<(String, String)> {
        let mut metrics: Vec<&str> = Vec::new();
        for s in &self.summaries {
            if !metrics.contains(&s.metric.as_str()) {
                metrics.push(&s.metric);
            }
        }
        let mut files: Vec<(String, String)> = metrics
            .into_iter()
            .map(|metric| {
                let mut body = String::new();
                for s in self.summaries.iter().filter(|s| s.metric == metric) {
                    let _ = writeln!(body, "{} {}", 2 * s.n + 1, s.median);
                }
                (format!("median_{metric}.dat"), body)
            })
            .collect();
        if !self.exceedance.is_empty() {
            let mut body = String::new();
            for e in &self.exceedance {
                let _ = writeln!(body, "{} {}", 2 * e.n + 1, e.fraction);
            }
            files.push(("exceedance_fraction.dat".into(), body));
        }
        if !self.ergodic.is_empty() {
            let mut body = String::new();
            for e in &self.ergodic {
                let _ = writeln!(body, "{} {}", 2 * e.n + 1, e.gap);
            }
            files.push(("ergodic_gap.dat".into(), body));
        }
        files
    }
}

fn summarize(n_list: &[usize], records: &[DistanceRecord]) -> Vec<MetricSummary> {
    let mut out = Vec::new();
    for &n in n_list {
        let mut by_metric: BTreeMap<String, (usize, Vec<f64>)> = BTreeMap::new();
        for rec in records.iter().filter(|r| r.n == n) {
            for (order, (metric, value)) in rec.rows().into_iter().enumerate() {
                by_metric.entry(metric).or_insert((order, Vec::new())).1.push(value);
            }
        }
        let mut entries: Vec<(String, (usize, Vec<f64>))> = by_metric.into_iter().collect();
        entries.sort_by_key(|(_, (order, _))| *order);
        for (metric, (_, values)) in entries {
            out.push(MetricSummary {
                n,
                metric,
                median: median(&values),
                iqr: iqr(&values),
                count: values.len(),
            });
        }
    }
    out
}
