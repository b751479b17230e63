//! Target definitions: state-space model interface and trajectory types.

use crate::rng::RandomStream;

/// A sequential latent-variable target.
///
/// The target is `p(x_{1:T} | y_{1:T}) ∝ μ(x_1) ∏ f_t(x_t | x_{1:t-1})
/// ∏ g_t(y_t | x_{1:t})`, with a proposal family `q_t` used by the sweep
/// kernels. Densities receive the whole particle history through a
/// [`PathView`], so non-Markovian targets are expressible; Markovian models
/// just read the last state.
///
/// Time indices `t` are 0-based here: `t = 0` is the initial step handled by
/// `*_initial`, and the transition methods are called for `t >= 1` with a
/// history covering steps `0..t`.
///
/// The proposal methods default to the prior (`q_1 = μ`, `q_t = f_t`), which
/// is what every shipped benchmark model uses; adapted proposals override
/// them. `log_proposal` must be finite wherever `propose` can emit a sample.
pub trait Model: Sync {
    /// Dimension of one latent state.
    fn dim(&self) -> usize;

    /// Draws `x_1` from the initial distribution `μ` into `out`.
    fn sample_initial(&self, rng: &mut RandomStream, out: &mut [f64]);

    /// `log μ(x_1)`.
    fn log_initial(&self, x: &[f64]) -> f64;

    /// Draws `x_t ~ f_t(· | history)` into `out`, `t >= 1`.
    fn sample_transition(&self, t: usize, history: &PathView<'_>, rng: &mut RandomStream, out: &mut [f64]);

    /// `log f_t(x | history)`, `t >= 1`.
    fn log_transition(&self, t: usize, history: &PathView<'_>, x: &[f64]) -> f64;

    /// `log g_t(y | x_{1:t})` where `x` is the time-`t` state and `history`
    /// covers the strictly earlier steps. At `t = 0` there is no prefix and
    /// `history` is a view of `x` itself; implementations must not read it
    /// there.
    fn log_observation(&self, t: usize, history: &PathView<'_>, x: &[f64], y: &[f64]) -> f64;

    /// Draws from the proposal at `t = 0`. Defaults to the prior `μ`.
    fn propose_initial(&self, rng: &mut RandomStream, out: &mut [f64]) {
        self.sample_initial(rng, out);
    }

    /// `log q_1(x_1)`. Defaults to `log μ`.
    fn log_proposal_initial(&self, x: &[f64]) -> f64 {
        self.log_initial(x)
    }

    /// Draws from the proposal at `t >= 1`. Defaults to the prior transition.
    fn propose(&self, t: usize, history: &PathView<'_>, rng: &mut RandomStream, out: &mut [f64]) {
        self.sample_transition(t, history, rng, out);
    }

    /// `log q_t(x | history)`. Defaults to `log f_t`.
    fn log_proposal(&self, t: usize, history: &PathView<'_>, x: &[f64]) -> f64 {
        self.log_transition(t, history, x)
    }
}

/// One full latent path `x_{1:T}`, stored flat as `T * dim` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    dim: usize,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(dim: usize, values: Vec<f64>) -> Self {
        assert!(dim > 0, "state dimension must be positive");
        assert_eq!(values.len() % dim, 0, "values must be a whole number of states");
        Trajectory { dim, values }
    }

    pub fn zeros(dim: usize, len: usize) -> Self {
        Trajectory {
            dim,
            values: vec![0.0; dim * len],
        }
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The state at step `t`.
    pub fn state(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn state_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.dim..(t + 1) * self.dim]
    }

    /// Flat view of all values, step-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterator over per-step states.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim)
    }
}

/// Flat storage for the `T x N` particle states of one sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleGrid {
    dim: usize,
    n: usize,
    steps: usize,
    data: Vec<f64>,
}

impl ParticleGrid {
    pub fn zeros(dim: usize, n: usize, steps: usize) -> Self {
        ParticleGrid {
            dim,
            n,
            steps,
            data: vec![0.0; dim * n * steps],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    fn offset(&self, t: usize, i: usize) -> usize {
        debug_assert!(t < self.steps && i < self.n);
        (t * self.n + i) * self.dim
    }

    /// State of particle slot `i` at step `t`.
    #[inline]
    pub fn state(&self, t: usize, i: usize) -> &[f64] {
        let o = self.offset(t, i);
        &self.data[o..o + self.dim]
    }

    #[inline]
    pub fn state_mut(&mut self, t: usize, i: usize) -> &mut [f64] {
        let o = self.offset(t, i);
        &mut self.data[o..o + self.dim]
    }

    pub fn set_state(&mut self, t: usize, i: usize, values: &[f64]) {
        self.state_mut(t, i).copy_from_slice(values);
    }
}

/// Read-only view of one particle's history `x_{1:t}` inside a sweep.
///
/// Histories are never copied during a sweep: the view resolves step `s` by
/// walking ancestor indices backwards from its tip, so the common Markovian
/// access `history.last()` is a single lookup.
pub struct PathView<'a> {
    grid: &'a ParticleGrid,
    /// `ancestors[t][i]`: parent slot at step `t` of the particle occupying
    /// slot `i` at step `t + 1`. Only rows `0..tip_t` are consulted.
    ancestors: &'a [Vec<u32>],
    tip_t: usize,
    tip_slot: usize,
}

impl<'a> PathView<'a> {
    pub fn new(
        grid: &'a ParticleGrid,
        ancestors: &'a [Vec<u32>],
        tip_t: usize,
        tip_slot: usize,
    ) -> Self {
        PathView {
            grid,
            ancestors,
            tip_t,
            tip_slot,
        }
    }

    /// Number of steps covered (`tip + 1`).
    pub fn len(&self) -> usize {
        self.tip_t + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// The state at step `s <= tip`. Cost is `O(tip - s)` ancestor hops.
    pub fn state(&self, s: usize) -> &'a [f64] {
        debug_assert!(s <= self.tip_t);
        let mut slot = self.tip_slot;
        let mut t = self.tip_t;
        while t > s {
            slot = self.ancestors[t - 1][slot] as usize;
            t -= 1;
        }
        self.grid.state(s, slot)
    }

    /// The tip state `x_t`, a constant-time lookup.
    pub fn last(&self) -> &'a [f64] {
        self.grid.state(self.tip_t, self.tip_slot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_accessors() {
        let traj = Trajectory::new(2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(traj.len(), 3);
        assert_eq!(traj.dim(), 2);
        assert_eq!(traj.state(1), &[3.0, 4.0]);
        assert_eq!(traj.states().count(), 3);
    }

    #[test]
    fn path_view_walks_ancestry() {
        // 3 steps, 2 slots, 1-dim states. Values encode (t, i) as t*10 + i.
        let mut grid = ParticleGrid::zeros(1, 2, 3);
        for t in 0..3 {
            for i in 0..2 {
                grid.set_state(t, i, &[(t * 10 + i) as f64]);
            }
        }
        // Slot 0 at step 2 descends from slot 1 at step 1, which descends
        // from slot 1 at step 0.
        let ancestors = vec![vec![0u32, 1], vec![1, 0]];
        let view = PathView::new(&grid, &ancestors, 2, 0);
        assert_eq!(view.len(), 3);
        assert_eq!(view.last(), &[20.0]);
        assert_eq!(view.state(2), &[20.0]);
        assert_eq!(view.state(1), &[11.0]);
        assert_eq!(view.state(0), &[1.0]);
    }
}
