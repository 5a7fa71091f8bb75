use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{sample_input, ModelParams};
use crate::network::weights::{SimConfig, WeightField};
use crate::rng::{stream_rng, Stream};

/// Membrane potentials of all `2n+1` neurons over times `0..=T`, with the
/// per-neuron inputs and noise that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    n: usize,
    horizon: usize,
    seed: u64,
    /// Row `j + n`, column `t`.
    u: Vec<f64>,
    /// `θ^j`.
    inputs: Vec<f64>,
    /// `B^j_{t-1}` at row `j + n`, column `t - 1`.
    noise: Vec<f64>,
}

impl TrajectoryEnsemble {
    /// Wraps stored potentials (e.g. loaded from disk); inputs and noise are unknown.
    pub fn from_potentials(n: usize, horizon: usize, seed: u64, u: Vec<f64>) -> Result<Self> {
        let size = 2 * n + 1;
        if u.len() != size * (horizon + 1) {
            return Err(Error::Shape(format!(
                "ensemble needs {} values, got {}",
                size * (horizon + 1),
                u.len()
            )));
        }
        Ok(TrajectoryEnsemble {
            n,
            horizon,
            seed,
            u,
            inputs: Vec::new(),
            noise: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        2 * self.n + 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Trajectory by storage position `0..2n+1`.
    pub fn trajectory(&self, pos: usize) -> &[f64] {
        let w = self.horizon + 1;
        &self.u[pos * w..(pos + 1) * w]
    }

    /// `u^j_t` for a neuron label `j ∈ -n..=n`.
    pub fn get(&self, j: i64, t: usize) -> f64 {
        self.trajectory((j + self.n as i64) as usize)[t]
    }

    pub fn potentials(&self) -> &[f64] {
        &self.u
    }

    pub fn inputs(&self) -> Option<&[f64]> {
        (!self.inputs.is_empty()).then_some(&self.inputs[..])
    }

    /// `B^j_{t-1}` for storage position `pos` and `t ≥ 1`.
    pub fn noise(&self, pos: usize, t: usize) -> Option<f64> {
        (!self.noise.is_empty()).then(|| self.noise[pos * self.horizon + t - 1])
    }

    /// Cyclic relabeling `j ↦ j + shift` of the neurons.
    pub fn shifted(&self, shift: i64) -> Self {
        let size = self.size();
        let w = self.horizon + 1;
        let src = |pos: usize| (pos as i64 + shift).rem_euclid(size as i64) as usize;
        let mut out = self.clone();
        for pos in 0..size {
            let from = src(pos);
            out.u[pos * w..(pos + 1) * w].copy_from_slice(&self.u[from * w..(from + 1) * w]);
            if !self.inputs.is_empty() {
                out.inputs[pos] = self.inputs[from];
                let h = self.horizon;
                out.noise[pos * h..(pos + 1) * h].copy_from_slice(&self.noise[from * h..(from + 1) * h]);
            }
        }
        out
    }
}

/// Runs `u^j_t = γ u^j_{t-1} + Σ_i J_{ji} f(u^i_{t-1}) + θ^j + B^j_{t-1}`.
///
/// Initial values, inputs and noise come from three independent streams of
/// `sim.seed`; inputs are drawn once per neuron and held over time.
pub fn simulate(p: &ModelParams, sim: &SimConfig, j: &WeightField) -> Result<TrajectoryEnsemble> {
    if j.n() != sim.n {
        return Err(Error::Shape(format!(
            "weight field is for n={}, simulation has n={}",
            j.n(),
            sim.n
        )));
    }
    let size = sim.population();
    let horizon = p.horizon_t;
    let w = horizon + 1;
    let sigma = p.sigma2.sqrt();

    let mut init_rng = stream_rng(sim.seed, 0, Stream::Initial);
    let mut input_rng = stream_rng(sim.seed, 0, Stream::Inputs);
    let mut noise_rng = stream_rng(sim.seed, 0, Stream::Noise);

    let mut u = vec![0.0; size * w];
    for pos in 0..size {
        u[pos * w] = p.mu_init.sample(&mut init_rng);
    }
    let inputs: Vec<f64> = (0..size).map(|_| sample_input(p, &mut input_rng)).collect();
    let mut noise = vec![0.0; size * horizon];

    let mut rates = vec![0.0; size];
    for t in 1..=horizon {
        for (pos, rate) in rates.iter_mut().enumerate() {
            *rate = p.f.eval(u[pos * w + t - 1]);
        }
        for pos in 0..size {
            let b: f64 = sigma * noise_rng.sample::<f64, _>(StandardNormal);
            noise[pos * horizon + t - 1] = b;
            let drive: f64 = j.row(pos).iter().zip(&rates).map(|(a, r)| a * r).sum();
            u[pos * w + t] = p.gamma * u[pos * w + t - 1] + drive + inputs[pos] + b;
        }
    }

    Ok(TrajectoryEnsemble {
        n: sim.n,
        horizon,
        seed: sim.seed,
        u,
        inputs,
        noise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{psi_forward, CovFunction, InitialLaw, SigmoidSpec};
    use crate::network::weights::sample_weights;

    fn c1(horizon_t: usize) -> ModelParams {
        ModelParams {
            gamma: 0.5,
            sigma2: 1.0,
            theta_bar: 0.3,
            theta2: 0.2,
            j_bar: 1.0,
            lambda: CovFunction::separable(&[0.1, 0.2, 0.1]).unwrap(),
            f: SigmoidSpec::logistic(1.0),
            mu_init: InitialLaw::Gaussian {
                mean: 0.0,
                variance: 0.5,
            },
            horizon_t,
        }
    }

    #[test]
    fn reproducible() {
        let p = c1(4);
        let sim = SimConfig::new(6, 99);
        let j = sample_weights(&p, &sim).unwrap();
        let a = simulate(&p, &sim, &j).unwrap();
        let b = simulate(&p, &sim, &j).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, &SimConfig::new(6, 100), &j).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn v_coordinates_recover_the_drive() {
        let p = c1(5);
        let sim = SimConfig::new(5, 3);
        let j = sample_weights(&p, &sim).unwrap();
        let ens = simulate(&p, &sim, &j).unwrap();
        let inputs = ens.inputs().unwrap();
        for pos in 0..ens.size() {
            let v = psi_forward(ens.trajectory(pos), p.gamma, p.theta_bar);
            for t in 1..=p.horizon_t {
                let drive: f64 = (0..ens.size())
                    .map(|i| j.at(pos, i) * p.f.eval(ens.trajectory(i)[t - 1]))
                    .sum();
                let expected = drive + (inputs[pos] - p.theta_bar) + ens.noise(pos, t).unwrap();
                assert!((v[t] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leak_free_uncoupled_is_input_plus_noise() {
        let p = ModelParams {
            gamma: 0.0,
            theta_bar: 0.7,
            ..ModelParams::decoupled(0.0, 2.0, 0.7, 3)
        };
        let sim = SimConfig::new(3, 8);
        let j = sample_weights(&p, &sim).unwrap();
        let ens = simulate(&p, &sim, &j).unwrap();
        for pos in 0..ens.size() {
            for t in 1..=3 {
                let expected = 0.7 + ens.noise(pos, t).unwrap();
                assert!((ens.trajectory(pos)[t] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let p = c1(2);
        let j = sample_weights(&p, &SimConfig::new(4, 0)).unwrap();
        assert!(simulate(&p, &SimConfig::new(5, 0), &j).is_err());
    }
}
