/// Membrane-potential trajectories of the `2m+1` neurons `-m..=m` around a
/// reference neuron, times `0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    m: usize,
    horizon: usize,
    u: Vec<f64>,
}

impl Window {
    pub fn zeros(m: usize, horizon: usize) -> Self {
        Window {
            m,
            horizon,
            u: vec![0.0; (2 * m + 1) * (horizon + 1)],
        }
    }

    pub fn radius(&self) -> usize {
        self.m
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    fn index(&self, offset: i64, t: usize) -> usize {
        debug_assert!(offset.unsigned_abs() as usize <= self.m && t <= self.horizon);
        (offset + self.m as i64) as usize * (self.horizon + 1) + t
    }

    /// `u^{offset}_t` relative to the window centre.
    #[inline]
    pub fn get(&self, offset: i64, t: usize) -> f64 {
        self.u[self.index(offset, t)]
    }

    #[inline]
    pub fn set(&mut self, offset: i64, t: usize, value: f64) {
        let i = self.index(offset, t);
        self.u[i] = value;
    }

    /// Trajectory of one neuron, times `0..=T`.
    pub fn trajectory(&self, offset: i64) -> &[f64] {
        let start = self.index(offset, 0);
        &self.u[start..start + self.horizon + 1]
    }

    pub fn trajectory_mut(&mut self, offset: i64) -> &mut [f64] {
        let start = self.index(offset, 0);
        let len = self.horizon + 1;
        &mut self.u[start..start + len]
    }
}

/// A bounded functional of a window of trajectories.
pub trait WindowFunctional: Sync {
    fn eval(&self, w: &Window) -> f64;
}

impl<F> WindowFunctional for F
where
    F: Fn(&Window) -> f64 + Sync,
{
    fn eval(&self, w: &Window) -> f64 {
        self(w)
    }
}
