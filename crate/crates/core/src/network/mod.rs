//! Finite-network simulation and its empirical statistics.

mod empirical;
pub mod io;
mod simulate;
mod weights;

pub use empirical::{
    empirical_stats, empirical_test_function, v_coordinates, window_values, EmpiricalStats,
};
pub use simulate::{simulate, TrajectoryEnsemble};
pub use weights::{
    sample_weights, DirectSampler, FftSampler, SimConfig, WeightField, WeightMethod, weight_moments, WeightMoments, DIRECT_MAX_N,
};
