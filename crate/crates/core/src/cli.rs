//! Command-line driver: one JSON config selects the model, numerics and
//! experiment; `--command` picks what to run.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{compare_quenched_to_averaged, run_averaged_convergence, run_plan, Experiment, ExperimentPlan};
use crate::limit_law::{mc_moment_oracle, solve_limit_law, LimitLaw, OracleTarget};
use crate::model::{validate_params, ModelParams};
use crate::network::io::{write_binary, write_csv};
use crate::network::{empirical_stats, sample_weights, simulate, SimConfig, WeightField};
use crate::quadrature::QuadratureConfig;
use crate::rng::derive_seed;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFICATION: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Largest |z| tolerated by the oracle comparison.
pub const ORACLE_Z_LIMIT: f64 = 5.0;
/// Quenched medians may exceed averaged medians by at most this factor.
pub const QUENCHED_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Limit,
    Simulate,
    Converge,
    Oracle,
}

#[derive(Debug, Parser)]
#[command(name = "netlim", version, about = "Limit law and finite-network convergence experiments")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, env = "NETLIM_OUT")]
    pub out: Option<PathBuf>,
    /// Master seed for simulation, experiments and the oracle.
    #[arg(long, env = "NETLIM_SEED")]
    pub seed: Option<u64>,
    /// Worker thread cap.
    #[arg(long, env = "NETLIM_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, value_enum)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleFormat {
    #[default]
    Binary,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(default = "default_oracle_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_oracle_samples() -> usize {
    1_000_000
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            samples: default_oracle_samples(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ExperimentPlan>,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Existing limit-law file used by `converge` and `oracle` instead of solving.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit_law: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub ensemble_format: EnsembleFormat,
    /// Also write two-column plot data files.
    #[serde(default)]
    pub plot: bool,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::Format(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Replaces every seed in the config.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(sim) = &mut self.sim {
            sim.seed = seed;
        }
        if let Some(plan) = &mut self.plan {
            plan.seed = seed;
        }
        self.oracle.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        validate_params(self.model.clone())?;
        self.quadrature.validate()?;
        if let Some(sim) = &self.sim {
            sim.validate(&self.model)?;
        }
        if let Some(plan) = &self.plan {
            plan.validate(&self.model)?;
        }
        if let Some(path) = &self.limit_law {
            if !path.exists() {
                return Err(Error::Format(format!("limit_law file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    fn require_sim(&self) -> Result<&SimConfig> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Format("config is missing field `sim`".into()))
    }

    fn require_plan(&self) -> Result<&ExperimentPlan> {
        self.plan
            .as_ref()
            .ok_or_else(|| Error::Format("config is missing field `plan`".into()))
    }

    /// Loads the configured limit-law file, or solves for it.
    pub fn limit(&self) -> Result<LimitLaw> {
        match &self.limit_law {
            Some(path) => {
                let law = LimitLaw::from_json(&fs::read_to_string(path)?)?;
                if law.params() != &self.model {
                    return Err(Error::Format(format!(
                        "limit_law file {} was computed for different model parameters",
                        path.display()
                    )));
                }
                Ok(law)
            }
            None => solve_limit_law(&self.model, &self.quadrature),
        }
    }
}

/// Result of a command: exit status plus the lines printed to stdout.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: u8,
    pub summary: String,
}

impl Outcome {
    fn ok(summary: String) -> Self {
        Outcome {
            status: EXIT_OK,
            summary,
        }
    }
}

/// Exit status for an error: configuration problems map to 2, numerical ones to 3.
pub fn exit_code_for(err: &Error) -> u8 {
    if err.is_config_error() || matches!(err, Error::Io(_)) {
        EXIT_CONFIG
    } else {
        EXIT_NUMERICAL
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut file = BufWriter::new(fs::File::create(&tmp)?);
        file.write_all(bytes)?;
        file.into_inner().map_err(|e| e.into_error())?.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn cmd_limit(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let law = solve_limit_law(&cfg.model, &cfg.quadrature)?;
    write_atomic(&out.join("limit_law.json"), law.to_json()?.as_bytes())?;
    let mut s = String::new();
    let c: Vec<String> = law.mean_vector().iter().map(|x| format!("{x:.10}")).collect();
    let _ = writeln!(s, "c = [{}]", c.join(", "));
    for (lag, norm) in law.k_frobenius().iter().enumerate() {
        let _ = writeln!(s, "|K^{lag}|_F = {norm:.10}");
    }
    Ok(Outcome::ok(s))
}

fn weights_csv(j: &WeightField) -> String {
    let size = j.size();
    let mut s = String::new();
    for row in 0..size {
        let cells: Vec<String> = j.row(row).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let sim = cfg.require_sim()?;
    let p = &cfg.model;
    let j = sample_weights(p, sim)?;
    let ens = simulate(p, sim, &j)?;
    let k_max = p.lambda.d().min(sim.n);
    let stats = empirical_stats(&ens, p, k_max)?;
    write_atomic(&out.join("weights.csv"), weights_csv(&j).as_bytes())?;
    let mut buf = Vec::new();
    let name = match cfg.ensemble_format {
        EnsembleFormat::Binary => {
            write_binary(&mut buf, &ens)?;
            "ensemble.bin"
        }
        EnsembleFormat::Csv => {
            write_csv(&mut buf, &[(0, &ens)])?;
            "ensemble.csv"
        }
    };
    write_atomic(&out.join(name), &buf)?;
    write_atomic(&out.join("empirical_stats.json"), stats.to_json()?.as_bytes())?;
    let c: Vec<String> = stats.c_hat.iter().map(|x| format!("{x:.6}")).collect();
    Ok(Outcome::ok(format!(
        "simulated {} neurons over {} steps (seed {})\nc_hat = [{}]\n",
        sim.population(),
        p.horizon_t,
        sim.seed,
        c.join(", ")
    )))
}

pub fn cmd_converge(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let plan = cfg.require_plan()?;
    let law = cfg.limit()?;
    let mut report = run_plan(plan, &law)?;
    if plan.experiment == Experiment::Quenched {
        let mut averaged_plan = plan.clone();
        averaged_plan.experiment = Experiment::Averaged;
        let averaged = run_averaged_convergence(&averaged_plan, &law)?;
        report
            .checks
            .push(compare_quenched_to_averaged(&report, &averaged, QUENCHED_FACTOR));
    }
    write_atomic(&out.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&out.join("report.json"), report.to_json()?.as_bytes())?;
    if cfg.plot {
        for (name, body) in report.plot_files() {
            write_atomic(&out.join("plots").join(name), body.as_bytes())?;
        }
    }
    let mut s = String::new();
    for m in report.summaries.iter().filter(|m| m.metric == "mean_error") {
        let _ = writeln!(s, "n={} median mean error {:.4e} (iqr {:.2e})", m.n, m.median, m.iqr);
    }
    for c in &report.checks {
        let _ = writeln!(s, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(Outcome {
        status: if report.all_passed() { EXIT_OK } else { EXIT_VERIFICATION },
        summary: s,
    })
}

/// Every stored entry of the law: means, and moment blocks when the weights are random.
pub fn oracle_targets(law: &LimitLaw) -> Vec<OracleTarget> {
    let t = law.horizon();
    let mut targets: Vec<OracleTarget> = (1..=t).map(|s| OracleTarget::Mean { s }).collect();
    if law.params().lambda.is_zero() {
        return targets;
    }
    for r in 1..=t {
        for s in r..=t {
            targets.push(OracleTarget::Same { r, s });
        }
    }
    for lag in 1..=law.moment_lag_radius() as i64 {
        for r in 1..=t {
            for s in 1..=t {
                targets.push(OracleTarget::Cross { lag, r, s });
            }
        }
    }
    targets
}

/// Quadrature value of an oracle target.
pub fn quadrature_value(law: &LimitLaw, target: OracleTarget) -> Option<f64> {
    match target {
        OracleTarget::Mean { s } => Some(law.c(s)),
        OracleTarget::Same { r, s } => law.m(0, r, s),
        OracleTarget::Cross { lag, r, s } => law.m(lag, r, s),
    }
}

pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.oracle.samples < 100 {
        return Err(Error::TooFewSamples(cfg.oracle.samples));
    }
    let law = cfg.limit()?;
    let mut table = String::from("entry,quadrature,estimate,stderr,z\n");
    let mut worst: f64 = 0.0;
    for (i, target) in oracle_targets(&law).into_iter().enumerate() {
        let value = quadrature_value(&law, target)
            .ok_or_else(|| Error::Format(format!("limit law has no entry {target}")))?;
        let est = mc_moment_oracle(&law, target, cfg.oracle.samples, derive_seed(cfg.oracle.seed, i as u64))?;
        let z = est.z_score(value);
        worst = worst.max(z.abs());
        let _ = writeln!(table, "{target},{value},{},{},{z}", est.estimate, est.stderr);
    }
    write_atomic(&out.join("oracle.csv"), table.as_bytes())?;
    let passed = worst <= ORACLE_Z_LIMIT;
    Ok(Outcome {
        status: if passed { EXIT_OK } else { EXIT_VERIFICATION },
        summary: format!(
            "max |z| = {worst:.3} over {} entries{}\n",
            table.lines().count() - 1,
            if passed { "" } else { " (exceeds 5)" }
        ),
    })
}

/// Loads, overrides and validates the config, then runs the command.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    cfg.validate()?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("netlim-out"));
    let exec = || match cli.command {
        Command::Limit => cmd_limit(&cfg, &out),
        Command::Simulate => cmd_simulate(&cfg, &out),
        Command::Converge => cmd_converge(&cfg, &out),
        Command::Oracle => cmd_oracle(&cfg, &out),
    };
    match cli.threads {
        Some(0) => Err(Error::Format("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Format(format!("cannot start thread pool: {e}")))?
            .install(exec),
        None => exec(),
    }
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            ExitCode::from(outcome.status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovFunction, InitialLaw, SigmoidSpec};

    fn config() -> RunConfig {
        RunConfig {
            model: ModelParams {
                gamma: 0.5,
                sigma2: 1.0,
                theta_bar: 0.0,
                theta2: 0.0,
                j_bar: 1.0,
                lambda: CovFunction::separable(&[0.1, 0.2, 0.1]).unwrap(),
                f: SigmoidSpec::logistic(1.0),
                mu_init: InitialLaw::PointMass { u0: 0.0 },
                horizon_t: 3,
            },
            quadrature: QuadratureConfig::default(),
            sim: Some(SimConfig::new(4, 1)),
            plan: Some(ExperimentPlan::new(Experiment::Averaged, vec![5, 10], 2, 3)),
            oracle: OracleConfig::default(),
            limit_law: None,
            output_dir: None,
            ensemble_format: EnsembleFormat::Csv,
            plot: true,
        }
    }

    #[test]
    fn config_round_trips() {
        let cfg = config();
        let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_field_names_the_field() {
        let mut v: serde_json::Value = serde_json::from_str(&config().to_json().unwrap()).unwrap();
        v["model"].as_object_mut().unwrap().remove("gamma");
        let err = RunConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("gamma"));
        assert_eq!(exit_code_for(&err), EXIT_CONFIG);
    }

    #[test]
    fn seed_override_reaches_every_section() {
        let mut cfg = config();
        cfg.override_seed(42);
        assert_eq!(cfg.sim.unwrap().seed, 42);
        assert_eq!(cfg.plan.unwrap().seed, 42);
        assert_eq!(cfg.oracle.seed, 42);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code_for(&Error::InvalidPlan("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code_for(&Error::TooFewSamples(50)), EXIT_CONFIG);
        let numerical = Error::NotPsd {
            context: "x".into(),
            min_eig: -1.0,
        };
        assert_eq!(exit_code_for(&numerical), EXIT_NUMERICAL);
    }

    #[test]
    fn oracle_targets_cover_stored_entries() {
        let cfg = config();
        let law = solve_limit_law(&cfg.model, &cfg.quadrature).unwrap();
        let targets = oracle_targets(&law);
        assert_eq!(targets.len(), 3 + 6 + 9);
        assert!(targets.iter().all(|&t| quadrature_value(&law, t).is_some()));
        let decoupled = ModelParams::decoupled(0.5, 1.0, 0.0, 3);
        let law0 = solve_limit_law(&decoupled, &cfg.quadrature).unwrap();
        assert_eq!(oracle_targets(&law0).len(), 3);
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("a.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }
}
