//! Expectation estimators and mixing diagnostics.
//!
//! Two estimators are provided for posterior expectations. The plain Monte
//! Carlo estimate averages a test function over the retained trajectories.
//! The Rao-Blackwellized estimate replaces each retained draw by its
//! conditional expectation given the iteration's particle systems, averaging
//! over both the node-index update and the particle-index draw:
//!
//! ```text
//! (1/P) * sum_m [ (sum_j zeta_m^j) * (sum_i wbar_T,m^i f(path_m^i)) ]
//! ```
//!
//! where the Gibbs weights `zeta` are the slot-conditional values realized
//! during the index-reassignment loop. Because the estimate conditions on
//! the sampled randomness it is never higher-variance than the plain one.
//!
//! The effective sample size diagnostic condenses bit-identical samples:
//! for each step `t` the step-`t` components of every ancestry-resolved
//! trajectory, weighted by its final weight, are folded into unique values
//! with consolidated weights `v_t^k`, scaled by per-node weights
//! `eta_m^r`, and `ESS_t = 1 / sum_k (v_t^k)^2`. Path degeneracy shows up
//! directly: trajectories that coalesce at a step contribute one value with
//! their summed weight, so a sampler stuck on its retained path generates
//! almost no new early-step values across iterations.

use std::collections::HashMap;
use std::hash::{BuildHasherDefault, Hasher};

use crate::engine::GibbsWeights;
use crate::error::Error;
use crate::model::Trajectory;
use crate::smc::SweepResult;
use crate::weights::normalize_log_weights_into;

/// View of one latent path: either an owned trajectory or one final
/// particle's ancestry-resolved path inside a sweep.
pub struct PathStates<'a> {
    source: Source<'a>,
}

enum Source<'a> {
    Trajectory(&'a Trajectory),
    Sweep {
        sweep: &'a SweepResult,
        /// `resolved[t][i]` slot matrix from [`SweepResult::resolve_all_paths`].
        resolved: &'a [Vec<u32>],
        path: usize,
    },
}

impl<'a> PathStates<'a> {
    pub fn from_trajectory(traj: &'a Trajectory) -> Self {
        PathStates {
            source: Source::Trajectory(traj),
        }
    }

    pub fn from_sweep(sweep: &'a SweepResult, resolved: &'a [Vec<u32>], path: usize) -> Self {
        PathStates {
            source: Source::Sweep {
                sweep,
                resolved,
                path,
            },
        }
    }

    pub fn len(&self) -> usize {
        match &self.source {
            Source::Trajectory(t) => t.len(),
            Source::Sweep { sweep, .. } => sweep.steps(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match &self.source {
            Source::Trajectory(t) => t.dim(),
            Source::Sweep { sweep, .. } => sweep.dim(),
        }
    }

    pub fn state(&self, t: usize) -> &[f64] {
        match &self.source {
            Source::Trajectory(traj) => traj.state(t),
            Source::Sweep {
                sweep,
                resolved,
                path,
            } => sweep.state(t, resolved[t][*path] as usize),
        }
    }
}

/// A test function `f` mapping a path to a fixed-length real vector.
pub struct TestFunction {
    kind: Kind,
}

enum Kind {
    /// Per-step, per-dimension power of the state: output length `T * dim`.
    MomentPerStep(u32),
    Custom {
        dim: usize,
        f: Box<dyn Fn(&PathStates<'_>, &mut Vec<f64>) + Send + Sync>,
    },
}

impl TestFunction {
    /// The identity per-step statistic (first moment).
    pub fn identity() -> Self {
        Self::moment(1)
    }

    /// Per-step `x^power`, the building block for mean/std/skew/kurtosis
    /// summaries of the marginals.
    pub fn moment(power: u32) -> Self {
        TestFunction {
            kind: Kind::MomentPerStep(power),
        }
    }

    /// Arbitrary statistic with a fixed output length.
    pub fn custom(
        dim: usize,
        f: impl Fn(&PathStates<'_>, &mut Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        TestFunction {
            kind: Kind::Custom {
                dim,
                f: Box::new(f),
            },
        }
    }

    /// Output length for paths of the given shape.
    pub fn out_dim(&self, steps: usize, dim: usize) -> usize {
        match &self.kind {
            Kind::MomentPerStep(_) => steps * dim,
            Kind::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval_into(&self, path: &PathStates<'_>, out: &mut Vec<f64>) {
        out.clear();
        match &self.kind {
            Kind::MomentPerStep(power) => {
                for t in 0..path.len() {
                    for &x in path.state(t) {
                        out.push(x.powi(*power as i32));
                    }
                }
            }
            Kind::Custom { f, .. } => f(path, out),
        }
    }
}

/// Running arithmetic mean of fixed-length vectors.
#[derive(Debug, Clone, Default)]
pub struct MeanAccumulator {
    count: usize,
    sum: Vec<f64>,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, values: &[f64]) -> Result<(), Error> {
        if self.count == 0 {
            self.sum = values.to_vec();
        } else {
            if values.len() != self.sum.len() {
                return Err(Error::DimensionMismatch(format!(
                    "accumulator holds length {}, got {}",
                    self.sum.len(),
                    values.len()
                )));
            }
            for (s, v) in self.sum.iter_mut().zip(values) {
                *s += v;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Result<Vec<f64>, Error> {
        if self.count == 0 {
            return Err(Error::EmptyRecord);
        }
        Ok(self.sum.iter().map(|s| s / self.count as f64).collect())
    }
}

/// Plain Monte Carlo estimate: the mean of `f` over retained trajectories.
pub fn mc_estimate<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    f: &TestFunction,
) -> Result<Vec<f64>, Error> {
    let mut acc = MeanAccumulator::new();
    let mut buf = Vec::new();
    for traj in trajectories {
        f.eval_into(&PathStates::from_trajectory(traj), &mut buf);
        acc.add(&buf)?;
    }
    acc.mean()
}

/// Self-normalized estimate over one sweep's final particle system:
/// `sum_i wbar_T^i f(path_i)`.
pub fn self_normalized_estimate(
    sweep: &SweepResult,
    f: &TestFunction,
) -> Result<Vec<f64>, Error> {
    let weights = sweep.final_weights()?;
    let resolved = sweep.resolve_all_paths();
    let mut out = vec![0.0; f.out_dim(sweep.steps(), sweep.dim())];
    let mut buf = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        f.eval_into(&PathStates::from_sweep(sweep, &resolved, i), &mut buf);
        if buf.len() != out.len() {
            return Err(Error::DimensionMismatch(format!(
                "test function returned length {}, expected {}",
                buf.len(),
                out.len()
            )));
        }
        for (o, v) in out.iter_mut().zip(&buf) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// One iteration's Rao-Blackwellized estimate over all `M` particle systems.
///
/// `zeta` holds the `P` slot-conditional Gibbs weight rows realized this
/// iteration. The caller averages the per-iteration values over `r`.
pub fn rao_blackwellized_estimate(
    sweeps: &[SweepResult],
    zeta: &[GibbsWeights],
    f: &TestFunction,
) -> Result<Vec<f64>, Error> {
    if sweeps.is_empty() || zeta.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let m = sweeps.len();
    for (j, row) in zeta.iter().enumerate() {
        if row.values().len() != m {
            return Err(Error::DimensionMismatch(format!(
                "zeta row {j} has {} entries for {m} nodes",
                row.values().len()
            )));
        }
        let total: f64 = row.values().iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::DimensionMismatch(format!(
                "zeta row {j} sums to {total}"
            )));
        }
    }
    let p = zeta.len();
    let out_dim = f.out_dim(sweeps[0].steps(), sweeps[0].dim());
    let mut out = vec![0.0; out_dim];
    for (node, sweep) in sweeps.iter().enumerate() {
        let mass: f64 = zeta.iter().map(|row| row.values()[node]).sum();
        if mass == 0.0 {
            continue;
        }
        let inner = self_normalized_estimate(sweep, f)?;
        if inner.len() != out_dim {
            return Err(Error::DimensionMismatch(
                "sweeps disagree on output length".into(),
            ));
        }
        for (o, v) in out.iter_mut().zip(&inner) {
            *o += mass * v;
        }
    }
    for o in &mut out {
        *o /= p as f64;
    }
    Ok(out)
}

/// Per-node slot-weight totals of one iteration: `sum_j zeta_m^j`, which
/// sums to `P` over nodes (exactly one per node in the degenerate `P = M`
/// pool).
pub fn zeta_column_sums(zeta: &[GibbsWeights]) -> Vec<f64> {
    if zeta.is_empty() {
        return Vec::new();
    }
    let m = zeta[0].values().len();
    let mut sums = vec![0.0; m];
    for row in zeta {
        for (acc, &z) in sums.iter_mut().zip(row.values()) {
            *acc += z;
        }
    }
    sums
}

/// Per-node mass of one iteration under the interacting sampler:
/// `(1/P) sum_j zeta_m^j`, which sums to one over nodes.
pub fn iteration_node_masses(zeta: &[GibbsWeights]) -> Vec<f64> {
    let p = zeta.len() as f64;
    let mut masses = zeta_column_sums(zeta);
    for mass in &mut masses {
        *mass /= p;
    }
    masses
}

/// Node weights `eta_m^r` for the interacting sampler: the per-iteration
/// masses divided by the iteration count.
pub fn node_weights_interacting(zeta_per_iteration: &[Vec<GibbsWeights>]) -> Vec<Vec<f64>> {
    let r = zeta_per_iteration.len() as f64;
    zeta_per_iteration
        .iter()
        .map(|zeta| {
            iteration_node_masses(zeta)
                .into_iter()
                .map(|mass| mass / r)
                .collect()
        })
        .collect()
}

/// Node weight for multi-start samplers: `1 / (R * M)` for every node and
/// iteration.
pub fn node_weight_uniform(iterations: usize, chains: usize) -> f64 {
    1.0 / (iterations as f64 * chains as f64)
}

#[derive(Default)]
struct IdentityHasher(u64);

impl Hasher for IdentityHasher {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, _bytes: &[u8]) {
        unreachable!("only u64 keys are hashed");
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

type FpMap<V> = HashMap<u64, V, BuildHasherDefault<IdentityHasher>>;

#[inline]
fn mix(h: u64, v: u64) -> u64 {
    let mut z = h ^ v.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb)
}

/// 64-bit fingerprint of a state's exact bit pattern.
#[inline]
fn fingerprint(state: &[f64]) -> u64 {
    let mut h = 0x517c_c1b7_2722_0a95;
    for &x in state {
        h = mix(h, x.to_bits());
    }
    h ^ (h >> 31)
}

/// Unique weighted samples per step, condensed by bit-exact state equality.
///
/// Duplicates arise from resample copies and retained-trajectory
/// re-injection, which are bit-identical; continuous proposals produce
/// distinct values almost surely, so no tolerance parameter is involved.
/// States are keyed by a 64-bit fingerprint of their exact bits; actual
/// values are kept only for steps registered via
/// [`UniqueSampleTable::retain_values_at`] (histogram support).
pub struct UniqueSampleTable {
    steps: usize,
    dim: usize,
    tables: Vec<FpMap<f64>>,
    values: Vec<Option<FpMap<Box<[f64]>>>>,
    total_mass: f64,
    step_mass: Vec<f64>,
    probs_buf: Vec<f64>,
}

impl UniqueSampleTable {
    pub fn new(steps: usize, dim: usize) -> Self {
        UniqueSampleTable {
            steps,
            dim,
            tables: (0..steps).map(|_| FpMap::default()).collect(),
            values: (0..steps).map(|_| None).collect(),
            total_mass: 0.0,
            step_mass: vec![0.0; steps],
            probs_buf: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Keep the actual state values at the given steps so weighted marginal
    /// histograms can be built later.
    pub fn retain_values_at(&mut self, steps: &[usize]) {
        for &t in steps {
            self.values[t] = Some(FpMap::default());
        }
    }

    /// Adds one weighted state sample at step `t`.
    pub fn add_weighted_state(&mut self, t: usize, state: &[f64], weight: f64) {
        debug_assert_eq!(state.len(), self.dim);
        if weight <= 0.0 {
            return;
        }
        let fp = fingerprint(state);
        *self.tables[t].entry(fp).or_insert(0.0) += weight;
        self.step_mass[t] += weight;
        if let Some(vals) = self.values[t].as_mut() {
            vals.entry(fp).or_insert_with(|| state.into());
        }
    }

    /// Folds in one particle system with node weight `mass`: the step-`t`
    /// components of the ancestry-resolved trajectories, each weighted by
    /// its final weight times `mass`. Trajectories sharing an ancestor at a
    /// step consolidate into one value carrying their combined weight.
    pub fn add_system(&mut self, sweep: &SweepResult, mass: f64) -> Result<(), Error> {
        if sweep.steps() != self.steps || sweep.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "sweep is {}x{} but table is {}x{}",
                sweep.steps(),
                sweep.dim(),
                self.steps,
                self.dim
            )));
        }
        let n = sweep.particle_count();
        self.probs_buf.resize(n, 0.0);
        let mut probs = std::mem::take(&mut self.probs_buf);
        normalize_log_weights_into(sweep.log_weights(self.steps - 1), &mut probs)
            .map_err(Error::Weight)?;
        let resolved = sweep.resolve_all_paths();
        for t in 0..self.steps {
            for i in 0..n {
                if probs[i] > 0.0 {
                    let slot = resolved[t][i] as usize;
                    self.add_weighted_state(t, sweep.state(t, slot), probs[i] * mass);
                }
            }
        }
        self.probs_buf = probs;
        self.total_mass += mass;
        Ok(())
    }

    /// Registers mass added through [`add_weighted_state`] directly.
    pub fn add_mass(&mut self, mass: f64) {
        self.total_mass += mass;
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Consolidated weight mass at step `t`; equals the total mass when
    /// every added system was complete.
    pub fn step_mass(&self, t: usize) -> f64 {
        self.step_mass[t]
    }

    pub fn unique_counts(&self) -> Vec<usize> {
        self.tables.iter().map(HashMap::len).collect()
    }

    /// `ESS_t = 1 / sum_k (v_t^k)^2` with the consolidated weights
    /// normalized by the total mass.
    pub fn ess(&self) -> Vec<f64> {
        self.tables
            .iter()
            .map(|table| {
                let sum_sq: f64 = table
                    .values()
                    .map(|&v| {
                        let w = v / self.total_mass;
                        w * w
                    })
                    .sum();
                if sum_sq > 0.0 {
                    1.0 / sum_sq
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Weighted histogram of the retained values at step `t` over uniform
    /// bins spanning `[lo, hi)`; out-of-range values are clamped to the edge
    /// bins. Requires `retain_values_at` to have covered `t`.
    pub fn histogram(&self, t: usize, bins: usize, lo: f64, hi: f64) -> Result<Vec<f64>, Error> {
        let values = self.values[t]
            .as_ref()
            .ok_or_else(|| Error::Config(format!("values not retained at step {t}")))?;
        if self.dim != 1 {
            return Err(Error::Config(
                "histograms are defined for one-dimensional states".into(),
            ));
        }
        let mut hist = vec![0.0; bins];
        let width = (hi - lo) / bins as f64;
        for (fp, value) in values {
            let weight = self.tables[t][fp] / self.total_mass;
            let k = (((value[0] - lo) / width).floor() as i64).clamp(0, bins as i64 - 1);
            hist[k as usize] += weight;
        }
        Ok(hist)
    }
}

/// Builds a [`UniqueSampleTable`] from `(system, node weight)` pairs and
/// returns the per-step effective sample size.
pub fn ess_per_step<'a>(
    systems: impl IntoIterator<Item = (&'a SweepResult, f64)>,
    steps: usize,
    dim: usize,
) -> Result<Vec<f64>, Error> {
    let mut table = UniqueSampleTable::new(steps, dim);
    let mut any = false;
    for (sweep, eta) in systems {
        table.add_system(sweep, eta)?;
        any = true;
    }
    if !any {
        return Err(Error::EmptyRecord);
    }
    Ok(table.ess())
}
