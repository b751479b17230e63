//! Metric accumulation and emission.
//!
//! The estimator library is the single source of metric logic; this module
//! wires its accumulators to the record stream during a run and replays
//! record files through the same accumulators for the `metrics` subcommand,
//! so recomputed tables are bit-identical to the in-run ones.

use std::path::Path;

use ipmcmc::baselines::{BaselineSink, ChainRecord};
use ipmcmc::engine::{GibbsWeights, PoolState, RecordSink, StepRecord};
use ipmcmc::error::Error;
use ipmcmc::estimators::{
    iteration_node_masses, self_normalized_estimate, zeta_column_sums, MeanAccumulator,
    PathStates, TestFunction, UniqueSampleTable,
};
use ipmcmc::model::Trajectory;
use ipmcmc::smc::SweepResult;

use crate::config::{MetricKind, RunConfig, SamplerKind};
use crate::records::{TsvField, TsvWriter};
use crate::AppError;

pub const ESTIMATES_FILE: &str = "estimates.tsv";
pub const MSE_PER_T_FILE: &str = "mse_per_t.tsv";
pub const MSE_VS_R_FILE: &str = "mse_vs_r.tsv";
pub const ESS_FILE: &str = "ess.tsv";
pub const HISTOGRAMS_FILE: &str = "histograms.tsv";
pub const SUMMARY_FILE: &str = "summary.toml";

/// What to accumulate during a run.
#[derive(Debug, Clone)]
pub struct MetricPlan {
    pub sampler: SamplerKind,
    pub chains: usize,
    pub iterations: usize,
    pub steps: usize,
    pub dim: usize,
    pub rao_blackwell: bool,
    pub want_ess: bool,
    pub checkpoints: Vec<usize>,
    pub histogram_steps: Vec<usize>,
}

impl MetricPlan {
    pub fn from_config(config: &RunConfig, steps: usize, dim: usize) -> Self {
        MetricPlan {
            sampler: config.experiment.sampler,
            chains: config.experiment.nodes,
            iterations: config.experiment.iterations,
            steps,
            dim,
            rao_blackwell: config.experiment.rao_blackwell,
            want_ess: config.experiment.metrics.contains(&MetricKind::Ess)
                || !config.experiment.histogram_steps.is_empty(),
            checkpoints: config.effective_checkpoints(),
            histogram_steps: config.experiment.histogram_steps.clone(),
        }
    }

    fn new_table(&self) -> UniqueSampleTable {
        let mut table = UniqueSampleTable::new(self.steps, self.dim);
        if !self.histogram_steps.is_empty() {
            table.retain_values_at(&self.histogram_steps);
        }
        table
    }
}

/// Accumulated metric state, shared by the pool and multi-start front ends.
pub struct MetricReport {
    pub plan: MetricPlan,
    pub mc_final: Option<Vec<f64>>,
    pub rb_final: Option<Vec<f64>>,
    /// Running estimates at each checkpoint, in checkpoint order.
    pub mc_at: Vec<Option<Vec<f64>>>,
    pub rb_at: Vec<Option<Vec<f64>>>,
    pub ess: Option<Vec<f64>>,
    pub unique: Option<Vec<usize>>,
    pub table: Option<UniqueSampleTable>,
}

/// Sum of per-accumulator means divided by `divisor`, with the same float
/// operation order everywhere: divide each by its count, sum in index
/// order, divide once. The degenerate pool and a matched-seed multi-start
/// PG run therefore produce bit-identical tables.
fn combine_means(accs: &[MeanAccumulator], divisor: usize) -> Result<Vec<f64>, Error> {
    let mut total: Option<Vec<f64>> = None;
    for acc in accs {
        let mean = acc.mean()?;
        match total.as_mut() {
            None => total = Some(mean),
            Some(sum) => {
                for (s, v) in sum.iter_mut().zip(&mean) {
                    *s += v;
                }
            }
        }
    }
    let mut total = total.ok_or(Error::EmptyRecord)?;
    for v in &mut total {
        *v /= divisor as f64;
    }
    Ok(total)
}

/// Metric sink for the pool engine. Plain estimates are kept per slot and
/// Rao-Blackwellized contributions per node, combined at read-out.
pub struct PoolMetrics {
    plan: MetricPlan,
    f: TestFunction,
    slot_mc: Vec<MeanAccumulator>,
    node_rb: Vec<MeanAccumulator>,
    mc_at: Vec<Option<Vec<f64>>>,
    rb_at: Vec<Option<Vec<f64>>>,
    table: Option<UniqueSampleTable>,
    buf: Vec<f64>,
}

impl PoolMetrics {
    pub fn new(plan: MetricPlan, conditional: usize, nodes: usize) -> Self {
        let table = plan.want_ess.then(|| plan.new_table());
        let checkpoints = plan.checkpoints.len();
        PoolMetrics {
            plan,
            f: TestFunction::identity(),
            slot_mc: (0..conditional).map(|_| MeanAccumulator::new()).collect(),
            node_rb: (0..nodes).map(|_| MeanAccumulator::new()).collect(),
            mc_at: vec![None; checkpoints],
            rb_at: vec![None; checkpoints],
            table,
            buf: Vec::new(),
        }
    }

    fn consume(
        &mut self,
        sweeps: &[SweepResult],
        zeta: &[GibbsWeights],
        retained: &[Trajectory],
        iteration: usize,
    ) -> Result<(), Error> {
        self.consume_retained(retained)?;
        if self.plan.rao_blackwell {
            // Node-major arrangement of the Rao-Blackwellized estimator:
            // each node accumulates (sum_j zeta_m^j) * own self-normalized
            // estimate; the read-out divides by P.
            let weights = zeta_column_sums(zeta);
            for ((acc, sweep), &weight) in
                self.node_rb.iter_mut().zip(sweeps).zip(&weights)
            {
                let mut est = self_normalized_estimate(sweep, &self.f)?;
                if weight != 1.0 {
                    for v in &mut est {
                        *v *= weight;
                    }
                }
                acc.add(&est)?;
            }
        }
        if let Some(table) = self.table.as_mut() {
            let masses = iteration_node_masses(zeta);
            for (sweep, &mass) in sweeps.iter().zip(&masses) {
                table.add_system(sweep, mass)?;
            }
        }
        self.checkpoint(iteration)?;
        Ok(())
    }

    /// Plain-estimate path used when no particle dump is available.
    fn consume_retained(&mut self, retained: &[Trajectory]) -> Result<(), Error> {
        for (acc, traj) in self.slot_mc.iter_mut().zip(retained) {
            self.f
                .eval_into(&PathStates::from_trajectory(traj), &mut self.buf);
            acc.add(&self.buf)?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, iteration: usize) -> Result<(), Error> {
        if let Some(k) = self.plan.checkpoints.iter().position(|&c| c == iteration) {
            let p = self.slot_mc.len();
            self.mc_at[k] = Some(combine_means(&self.slot_mc, p)?);
            if self.plan.rao_blackwell {
                self.rb_at[k] = Some(combine_means(&self.node_rb, p)?);
            }
        }
        Ok(())
    }

    pub fn into_report(self) -> MetricReport {
        let p = self.slot_mc.len();
        MetricReport {
            mc_final: combine_means(&self.slot_mc, p).ok(),
            rb_final: if self.plan.rao_blackwell {
                combine_means(&self.node_rb, p).ok()
            } else {
                None
            },
            mc_at: self.mc_at,
            rb_at: self.rb_at,
            ess: self.table.as_ref().map(UniqueSampleTable::ess),
            unique: self.table.as_ref().map(UniqueSampleTable::unique_counts),
            table: self.table,
            plan: self.plan,
        }
    }
}

impl RecordSink for PoolMetrics {
    fn on_record(&mut self, state: &PoolState, record: &StepRecord) -> Result<(), Error> {
        if record.is_init {
            return Ok(());
        }
        self.consume(&state.sweeps, &record.zeta, &state.retained, record.iteration)
    }
}

/// Metric sink for multi-start runs. Runs are chain-major: per-chain running
/// means are snapshotted at each checkpoint and averaged across chains.
pub struct ChainMetrics {
    plan: MetricPlan,
    f: TestFunction,
    chain_mc: MeanAccumulator,
    chain_rb: MeanAccumulator,
    mc_at: Vec<MeanAccumulator>,
    rb_at: Vec<MeanAccumulator>,
    mc_all: MeanAccumulator,
    rb_all: MeanAccumulator,
    table: Option<UniqueSampleTable>,
    buf: Vec<f64>,
}

impl ChainMetrics {
    pub fn new(plan: MetricPlan) -> Self {
        let table = plan.want_ess.then(|| plan.new_table());
        let checkpoints = plan.checkpoints.len();
        ChainMetrics {
            plan,
            f: TestFunction::identity(),
            chain_mc: MeanAccumulator::new(),
            chain_rb: MeanAccumulator::new(),
            mc_at: (0..checkpoints).map(|_| MeanAccumulator::new()).collect(),
            rb_at: (0..checkpoints).map(|_| MeanAccumulator::new()).collect(),
            mc_all: MeanAccumulator::new(),
            rb_all: MeanAccumulator::new(),
            table,
            buf: Vec::new(),
        }
    }

    fn start_chain(&mut self) {
        self.chain_mc = MeanAccumulator::new();
        self.chain_rb = MeanAccumulator::new();
    }

    fn consume(&mut self, record: &ChainRecord, system: &SweepResult) -> Result<(), Error> {
        if record.iteration == 0 {
            return Ok(());
        }
        self.f
            .eval_into(&PathStates::from_trajectory(&record.retained), &mut self.buf);
        self.chain_mc.add(&self.buf)?;
        if self.plan.rao_blackwell {
            let est = self_normalized_estimate(system, &self.f)?;
            self.chain_rb.add(&est)?;
        }
        if let Some(table) = self.table.as_mut() {
            let mass =
                1.0 / (self.plan.chains as f64 * self.plan.sampler.records_per_iteration() as f64);
            table.add_system(system, mass)?;
        }
        let last_phase = self.plan.sampler.records_per_iteration() - 1;
        if record.phase == last_phase {
            if let Some(k) = self
                .plan
                .checkpoints
                .iter()
                .position(|&c| c == record.iteration)
            {
                self.mc_at[k].add(&self.chain_mc.mean()?)?;
                if self.plan.rao_blackwell {
                    self.rb_at[k].add(&self.chain_rb.mean()?)?;
                }
            }
            if record.iteration == self.plan.iterations {
                self.mc_all.add(&self.chain_mc.mean()?)?;
                if self.plan.rao_blackwell {
                    self.rb_all.add(&self.chain_rb.mean()?)?;
                }
            }
        }
        Ok(())
    }

    pub fn into_report(self) -> MetricReport {
        MetricReport {
            mc_final: self.mc_all.mean().ok(),
            rb_final: if self.plan.rao_blackwell {
                self.rb_all.mean().ok()
            } else {
                None
            },
            mc_at: self.mc_at.into_iter().map(|acc| acc.mean().ok()).collect(),
            rb_at: self.rb_at.into_iter().map(|acc| acc.mean().ok()).collect(),
            ess: self.table.as_ref().map(UniqueSampleTable::ess),
            unique: self.table.as_ref().map(UniqueSampleTable::unique_counts),
            table: self.table,
            plan: self.plan,
        }
    }
}

impl BaselineSink for ChainMetrics {
    fn on_init(
        &mut self,
        _chain: usize,
        _sweep: &SweepResult,
        _retained: &Trajectory,
    ) -> Result<(), Error> {
        self.start_chain();
        Ok(())
    }

    fn on_step(&mut self, record: &ChainRecord, system: &SweepResult) -> Result<(), Error> {
        self.consume(record, system)
    }
}

fn mse_per_step(estimate: &[f64], truth: &[Vec<f64>]) -> Vec<f64> {
    let dim = truth[0].len();
    truth
        .iter()
        .enumerate()
        .map(|(t, row)| {
            row.iter()
                .enumerate()
                .map(|(k, v)| {
                    let e = estimate[t * dim + k] - v;
                    e * e
                })
                .sum::<f64>()
                / dim as f64
        })
        .collect()
}

/// Writes all metric tables derived from a finished report.
pub fn write_metric_files(
    dir: &Path,
    manifest_hash: &str,
    report: &MetricReport,
    truth: Option<&[Vec<f64>]>,
    run_summary: &RunSummaryInfo,
) -> Result<(), AppError> {
    let plan = &report.plan;
    let dim = plan.dim;

    let mut estimates = TsvWriter::create(
        &dir.join(ESTIMATES_FILE),
        manifest_hash,
        "t dim estimator value",
    )?;
    for (name, est) in [("mc", &report.mc_final), ("rb", &report.rb_final)] {
        if let Some(est) = est {
            for t in 0..plan.steps {
                for k in 0..dim {
                    estimates.row([
                        TsvField::Uint(t as u64),
                        TsvField::Uint(k as u64),
                        TsvField::Uint(if name == "mc" { 0 } else { 1 }),
                        TsvField::Float(est[t * dim + k]),
                    ])?;
                }
            }
        }
    }
    estimates.flush()?;

    if let Some(truth) = truth {
        let mut per_t = TsvWriter::create(
            &dir.join(MSE_PER_T_FILE),
            manifest_hash,
            "t estimator mse",
        )?;
        per_t.header_line("estimator: 0 = mc, 1 = rb")?;
        for (code, est) in [(0u64, &report.mc_final), (1, &report.rb_final)] {
            if let Some(est) = est {
                for (t, mse) in mse_per_step(est, truth).iter().enumerate() {
                    per_t.row([
                        TsvField::Uint(t as u64),
                        TsvField::Uint(code),
                        TsvField::Float(*mse),
                    ])?;
                }
            }
        }
        per_t.flush()?;

        let mut vs_r = TsvWriter::create(
            &dir.join(MSE_VS_R_FILE),
            manifest_hash,
            "r estimator mse",
        )?;
        vs_r.header_line("estimator: 0 = mc, 1 = rb; mse averaged over steps and dims")?;
        for (k, &r) in plan.checkpoints.iter().enumerate() {
            for (code, series) in [(0u64, &report.mc_at), (1, &report.rb_at)] {
                if let Some(est) = &series[k] {
                    let overall = mse_per_step(est, truth).iter().sum::<f64>()
                        / plan.steps as f64;
                    vs_r.row([
                        TsvField::Uint(r as u64),
                        TsvField::Uint(code),
                        TsvField::Float(overall),
                    ])?;
                }
            }
        }
        vs_r.flush()?;
    }

    if let (Some(ess), Some(unique)) = (&report.ess, &report.unique) {
        let mut file = TsvWriter::create(&dir.join(ESS_FILE), manifest_hash, "t ess ness unique")?;
        file.header_line("ness = ess / iterations; initialization sweeps excluded")?;
        for t in 0..plan.steps {
            file.row([
                TsvField::Uint(t as u64),
                TsvField::Float(ess[t]),
                TsvField::Float(ess[t] / plan.iterations as f64),
                TsvField::Uint(unique[t] as u64),
            ])?;
        }
        file.flush()?;
    }

    if !plan.histogram_steps.is_empty() {
        if let Some(table) = &report.table {
            let mut file = TsvWriter::create(
                &dir.join(HISTOGRAMS_FILE),
                manifest_hash,
                "t bin_lo bin_hi weight",
            )?;
            let [lo, hi] = run_summary.histogram_range;
            let bins = run_summary.histogram_bins;
            let width = (hi - lo) / bins as f64;
            for &t in &plan.histogram_steps {
                let hist = table
                    .histogram(t, bins, lo, hi)
                    .map_err(|e| AppError::Runtime(anyhow::anyhow!("histogram: {e}")))?;
                for (k, w) in hist.iter().enumerate() {
                    file.row([
                        TsvField::Uint(t as u64),
                        TsvField::Float(lo + k as f64 * width),
                        TsvField::Float(lo + (k + 1) as f64 * width),
                        TsvField::Float(*w),
                    ])?;
                }
            }
            file.flush()?;
        }
    }

    write_summary(dir, manifest_hash, run_summary)?;
    Ok(())
}

/// Deterministic run facts for `summary.toml`. Wall-clock timing is
/// deliberately excluded; it goes to stderr.
#[derive(Debug, Clone)]
pub struct RunSummaryInfo {
    pub sampler: SamplerKind,
    pub iterations: usize,
    pub nodes: usize,
    pub conditional: Option<usize>,
    pub particles: usize,
    pub switch_count: Option<usize>,
    pub accept_count: Option<usize>,
    pub mh_steps: Option<usize>,
    pub scalar_messages: Option<usize>,
    pub trajectory_messages: Option<usize>,
    pub histogram_bins: usize,
    pub histogram_range: [f64; 2],
}

fn write_summary(dir: &Path, manifest_hash: &str, info: &RunSummaryInfo) -> Result<(), AppError> {
    let mut text = String::new();
    text.push_str(&format!("manifest_hash = \"{manifest_hash}\"\n"));
    text.push_str(&format!("sampler = \"{}\"\n", info.sampler.name()));
    text.push_str(&format!("iterations = {}\n", info.iterations));
    text.push_str(&format!("nodes = {}\n", info.nodes));
    if let Some(p) = info.conditional {
        text.push_str(&format!("conditional = {p}\n"));
    }
    text.push_str(&format!("particles = {}\n", info.particles));
    if let Some(s) = info.switch_count {
        text.push_str(&format!("switch_count = {s}\n"));
        text.push_str(&format!(
            "switch_rate = {}\n",
            s as f64 / info.iterations as f64
        ));
    }
    if let (Some(a), Some(m)) = (info.accept_count, info.mh_steps) {
        text.push_str(&format!("accept_count = {a}\n"));
        text.push_str(&format!("mh_steps = {m}\n"));
        if m > 0 {
            text.push_str(&format!("acceptance_rate = {}\n", a as f64 / m as f64));
        }
    }
    if let Some(s) = info.scalar_messages {
        text.push_str(&format!("scalar_messages = {s}\n"));
    }
    if let Some(t) = info.trajectory_messages {
        text.push_str(&format!("trajectory_messages = {t}\n"));
    }
    std::fs::write(dir.join(SUMMARY_FILE), text)?;
    Ok(())
}

/// Recomputes every derivable metric file from the record files in a run
/// directory. Plain estimates and rate summaries come from `records.tsv`;
/// Rao-Blackwellized estimates and the ESS additionally need
/// `particles.tsv` (and `zeta.tsv` for the pool sampler).
pub fn recompute(run_dir: &Path) -> Result<(), AppError> {
    let manifest = crate::manifest::load_manifest(run_dir)?;
    let config = &manifest.config;
    let want_truth = config.experiment.metrics.contains(&MetricKind::Mse);
    let dataset = ipmcmc::models::dataset::Dataset::load(run_dir.join("dataset.tsv"))
        .map_err(|e| AppError::Config(format!("dataset.tsv: {e}")))?;
    let workload = crate::config::workload_from_dataset(dataset, want_truth)?;
    let steps = workload.observations.len();
    let dim = workload.model.dim();
    let mut plan = MetricPlan::from_config(config, steps, dim);

    let have_particles = crate::records::particles_present(run_dir);
    let needs_particles = plan.rao_blackwell || plan.want_ess;
    if needs_particles && !have_particles {
        if config.experiment.metrics.contains(&MetricKind::Ess)
            || config.experiment.rao_blackwell
        {
            return Err(AppError::Config(
                "particles.tsv is missing: Rao-Blackwellized estimates and ESS can only be \
                 recomputed from a run with dump_particles = true; rerun with it enabled or \
                 drop those metrics"
                    .into(),
            ));
        }
        plan.rao_blackwell = false;
        plan.want_ess = false;
    }

    let systems: Option<Vec<(usize, usize, usize, SweepResult)>> =
        if needs_particles && have_particles {
            Some(crate::records::read_particle_systems(run_dir)?)
        } else {
            None
        };

    let to_app = |e: Error| AppError::Runtime(anyhow::Error::new(e));
    let report;
    let mut info = RunSummaryInfo {
        sampler: config.experiment.sampler,
        iterations: config.experiment.iterations,
        nodes: config.experiment.nodes,
        conditional: config.experiment.conditional,
        particles: config.experiment.particles,
        switch_count: None,
        accept_count: None,
        mh_steps: None,
        scalar_messages: None,
        trajectory_messages: None,
        histogram_bins: config.experiment.histogram_bins,
        histogram_range: config.experiment.histogram_range,
    };

    if config.experiment.sampler == SamplerKind::Ipmcmc {
        let rows = crate::records::read_pool_records(run_dir)?;
        let m = config.experiment.nodes;
        let p = config.experiment.conditional.unwrap_or(m);
        let zeta_rows = read_zeta_weights(run_dir, p, m)?;
        let mut metrics = PoolMetrics::new(plan, p, m);
        // Group rows per iteration; records are emitted in (r, node) order.
        let mut switch_count = 0usize;
        let mut scalar_messages = 0usize;
        let mut trajectory_messages = 0usize;
        let pinned_slot = config.experiment.particles - 1;
        let mut prev_c: Option<Vec<usize>> = None;
        for group in rows.chunks(m) {
            let r = group[0].r;
            let mut c = vec![0usize; p];
            let mut b = vec![usize::MAX; p];
            let mut retained: Vec<Option<Trajectory>> = vec![None; p];
            for row in group {
                if let (Some(slot), true) = (row.slot, row.conditional) {
                    c[slot] = row.node;
                    b[slot] = row.b.unwrap_or(usize::MAX);
                    retained[slot] = Some(crate::records::trajectory_from_flat(
                        dim,
                        row.retained.clone(),
                    )?);
                }
            }
            // Re-derive the coordinator's message ledger: one scalar per
            // node, one trajectory per selected slot unless a node that ran
            // a conditional sweep was re-selected at its pinned slot.
            scalar_messages += m;
            match &prev_c {
                None => trajectory_messages += p,
                Some(prev) => {
                    if prev != &c {
                        switch_count += 1;
                    }
                    for (j, &cj) in c.iter().enumerate() {
                        if !(prev.contains(&cj) && b[j] == pinned_slot) {
                            trajectory_messages += 1;
                        }
                    }
                }
            }
            prev_c = Some(c);
            if r == 0 {
                continue;
            }
            let retained: Vec<Trajectory> = retained.into_iter().map(Option::unwrap).collect();
            if let Some(systems) = &systems {
                let sweeps: Vec<SweepResult> = systems
                    .iter()
                    .filter(|(sr, _, _, _)| *sr == r)
                    .map(|(_, _, _, s)| s.clone())
                    .collect();
                let zeta = &zeta_rows[r - 1];
                metrics
                    .consume(&sweeps, zeta, &retained, r)
                    .map_err(to_app)?;
            } else {
                metrics.consume_retained(&retained).map_err(to_app)?;
                metrics.checkpoint(r).map_err(to_app)?;
            }
        }
        info.switch_count = Some(switch_count);
        info.scalar_messages = Some(scalar_messages);
        info.trajectory_messages = Some(trajectory_messages);
        report = metrics.into_report();
    } else {
        let rows = crate::records::read_chain_records(run_dir)?;
        let mut metrics = ChainMetrics::new(plan);
        let mut accept_count = 0usize;
        let mut mh_steps = 0usize;
        let mut current_chain = usize::MAX;
        for row in &rows {
            if row.chain != current_chain {
                current_chain = row.chain;
                metrics.start_chain();
            }
            if let Some(accepted) = row.accepted {
                mh_steps += 1;
                accept_count += accepted as usize;
            }
            if row.r == 0 {
                continue;
            }
            let retained = crate::records::trajectory_from_flat(dim, row.retained.clone())?;
            let record = ChainRecord {
                chain: row.chain,
                iteration: row.r,
                phase: row.phase,
                retained,
                log_z: row.log_z,
                accepted: row.accepted,
            };
            if let Some(systems) = &systems {
                let system = systems
                    .iter()
                    .find(|(sr, sc, sp, _)| {
                        *sr == row.r && *sc == row.chain && *sp == row.phase
                    })
                    .map(|(_, _, _, s)| s)
                    .ok_or_else(|| {
                        AppError::Config(format!(
                            "particles.tsv has no system for iteration {} chain {} phase {}",
                            row.r, row.chain, row.phase
                        ))
                    })?;
                metrics.consume(&record, system).map_err(to_app)?;
            } else {
                metrics.consume_plain(&record).map_err(to_app)?;
            }
        }
        if config.experiment.sampler.has_mh_step() {
            info.accept_count = Some(accept_count);
            info.mh_steps = Some(mh_steps);
        }
        report = metrics.into_report();
    }

    write_metric_files(
        run_dir,
        &manifest.manifest_hash,
        &report,
        workload.truth.as_deref(),
        &info,
    )
}

impl ChainMetrics {
    /// Plain-estimate path used when no particle dump is available.
    fn consume_plain(&mut self, record: &ChainRecord) -> Result<(), Error> {
        if record.iteration == 0 {
            return Ok(());
        }
        self.f
            .eval_into(&PathStates::from_trajectory(&record.retained), &mut self.buf);
        self.chain_mc.add(&self.buf)?;
        let last_phase = self.plan.sampler.records_per_iteration() - 1;
        if record.phase == last_phase {
            if let Some(k) = self
                .plan
                .checkpoints
                .iter()
                .position(|&c| c == record.iteration)
            {
                self.mc_at[k].add(&self.chain_mc.mean()?)?;
            }
            if record.iteration == self.plan.iterations {
                self.mc_all.add(&self.chain_mc.mean()?)?;
            }
        }
        Ok(())
    }
}

fn read_zeta_weights(
    dir: &Path,
    p: usize,
    m: usize,
) -> Result<Vec<Vec<GibbsWeights>>, AppError> {
    let raw = crate::records::read_zeta(dir, p, m)?;
    raw.into_iter()
        .map(|rows| {
            rows.into_iter()
                .map(|zeta| {
                    GibbsWeights::from_values(zeta)
                        .map_err(|e| AppError::Config(format!("zeta.tsv: {e}")))
                })
                .collect()
        })
        .collect()
}
