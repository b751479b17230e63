//! Record file writers and readers.
//!
//! All files are tab-free space-separated text with `#` header lines; the
//! first header line carries the manifest hash. Floats are written in
//! shortest round-trip form so record files reload bit-exactly. Particle
//! indices in all files are 0-based.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ipmcmc::baselines::{BaselineSink, ChainRecord};
use ipmcmc::engine::{PoolState, RecordSink, StepRecord};
use ipmcmc::error::Error;
use ipmcmc::model::{ParticleGrid, Trajectory};
use ipmcmc::smc::SweepResult;

use crate::AppError;

pub const RECORDS_FILE: &str = "records.tsv";
pub const ZETA_FILE: &str = "zeta.tsv";
pub const PARTICLES_FILE: &str = "particles.tsv";

pub struct TsvWriter {
    w: BufWriter<File>,
    line: String,
}

impl TsvWriter {
    pub fn create(path: &Path, manifest_hash: &str, columns: &str) -> Result<Self, AppError> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# manifest = {manifest_hash}")?;
        writeln!(w, "# columns: {columns}")?;
        Ok(TsvWriter {
            w,
            line: String::new(),
        })
    }

    pub fn header_line(&mut self, line: &str) -> Result<(), AppError> {
        writeln!(self.w, "# {line}")?;
        Ok(())
    }

    pub fn row(&mut self, fields: impl IntoIterator<Item = TsvField>) -> Result<(), AppError> {
        self.line.clear();
        for (k, field) in fields.into_iter().enumerate() {
            if k > 0 {
                self.line.push(' ');
            }
            match field {
                TsvField::Int(v) => {
                    let _ = write!(self.line, "{v}");
                }
                TsvField::Uint(v) => {
                    let _ = write!(self.line, "{v}");
                }
                TsvField::Float(v) => {
                    let _ = write!(self.line, "{v}");
                }
                TsvField::Str(v) => {
                    let _ = write!(self.line, "{v}");
                }
            }
        }
        writeln!(self.w, "{}", self.line)?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), AppError> {
        self.w.flush()?;
        Ok(())
    }
}

pub enum TsvField {
    Int(i64),
    Uint(u64),
    Float(f64),
    Str(&'static str),
}

fn sweep_rows(
    writer: &mut TsvWriter,
    r: usize,
    node: usize,
    phase: usize,
    sweep: &SweepResult,
) -> Result<(), AppError> {
    let n = sweep.particle_count();
    for t in 0..sweep.steps() {
        let weights = sweep.log_weights(t);
        for i in 0..n {
            let ancestor: i64 = if t == 0 {
                -1
            } else {
                sweep.ancestor(t - 1, i) as i64
            };
            let mut fields = vec![
                TsvField::Uint(r as u64),
                TsvField::Uint(node as u64),
                TsvField::Uint(phase as u64),
                TsvField::Uint(t as u64),
                TsvField::Uint(i as u64),
                TsvField::Int(ancestor),
                TsvField::Float(weights[i]),
            ];
            fields.extend(sweep.state(t, i).iter().map(|&x| TsvField::Float(x)));
            writer.row(fields)?;
        }
    }
    Ok(())
}

/// Streams pool-engine output to `records.tsv` / `zeta.tsv` (and optionally
/// `particles.tsv`): one records row per node per iteration.
pub struct PoolFileSink {
    records: TsvWriter,
    zeta: TsvWriter,
    particles: Option<TsvWriter>,
}

impl PoolFileSink {
    pub fn create(
        dir: &Path,
        manifest_hash: &str,
        dump_particles: bool,
    ) -> Result<Self, AppError> {
        let mut records = TsvWriter::create(
            &dir.join(RECORDS_FILE),
            manifest_hash,
            "r node log_z conditional slot b retained...",
        )?;
        records.header_line("sampler_family = pool")?;
        records.header_line("iteration 0 is the initialization sweep")?;
        let zeta = TsvWriter::create(&dir.join(ZETA_FILE), manifest_hash, "r slot node zeta")?;
        let particles = if dump_particles {
            Some(TsvWriter::create(
                &dir.join(PARTICLES_FILE),
                manifest_hash,
                "r node phase t i ancestor log_weight state...",
            )?)
        } else {
            None
        };
        Ok(PoolFileSink {
            records,
            zeta,
            particles,
        })
    }
}

impl RecordSink for PoolFileSink {
    fn on_record(&mut self, state: &PoolState, record: &StepRecord) -> Result<(), Error> {
        let inner = |sink: &mut PoolFileSink| -> Result<(), AppError> {
            for (node, log_z) in record.log_z.iter().enumerate() {
                let slot = record.c.iter().position(|&c| c == node);
                let mut fields = vec![
                    TsvField::Uint(record.iteration as u64),
                    TsvField::Uint(node as u64),
                    TsvField::Float(*log_z),
                    TsvField::Uint(slot.is_some() as u64),
                ];
                match slot {
                    Some(j) => {
                        fields.push(TsvField::Int(j as i64));
                        let b = record.b[j];
                        fields.push(TsvField::Int(if b == ipmcmc::engine::NO_INDEX {
                            -1
                        } else {
                            b as i64
                        }));
                        fields.extend(
                            state.retained[j]
                                .values()
                                .iter()
                                .map(|&x| TsvField::Float(x)),
                        );
                    }
                    None => {
                        fields.push(TsvField::Int(-1));
                        fields.push(TsvField::Int(-1));
                    }
                }
                sink.records.row(fields)?;
            }
            for (j, row) in record.zeta.iter().enumerate() {
                for (node, &z) in row.values().iter().enumerate() {
                    sink.zeta.row([
                        TsvField::Uint(record.iteration as u64),
                        TsvField::Uint(j as u64),
                        TsvField::Uint(node as u64),
                        TsvField::Float(z),
                    ])?;
                }
            }
            if let Some(particles) = sink.particles.as_mut() {
                for (node, sweep) in state.sweeps.iter().enumerate() {
                    sweep_rows(particles, record.iteration, node, 0, sweep)?;
                }
            }
            Ok(())
        };
        inner(self).map_err(|e| Error::Sink(e.to_string()))
    }

    fn finish(&mut self) -> Result<(), Error> {
        let flush = |sink: &mut PoolFileSink| -> Result<(), AppError> {
            sink.records.flush()?;
            sink.zeta.flush()?;
            if let Some(p) = sink.particles.as_mut() {
                p.flush()?;
            }
            Ok(())
        };
        flush(self).map_err(|e| Error::Sink(e.to_string()))
    }
}

/// Streams multi-start output: one records row per recorded sub-step.
pub struct ChainFileSink {
    records: TsvWriter,
    particles: Option<TsvWriter>,
}

impl ChainFileSink {
    pub fn create(
        dir: &Path,
        manifest_hash: &str,
        dump_particles: bool,
    ) -> Result<Self, AppError> {
        let mut records = TsvWriter::create(
            &dir.join(RECORDS_FILE),
            manifest_hash,
            "r chain phase log_z accepted retained...",
        )?;
        records.header_line("sampler_family = chains")?;
        records.header_line("iteration 0 is the initialization sweep; accepted: -1 no MH step")?;
        let particles = if dump_particles {
            Some(TsvWriter::create(
                &dir.join(PARTICLES_FILE),
                manifest_hash,
                "r node phase t i ancestor log_weight state...",
            )?)
        } else {
            None
        };
        Ok(ChainFileSink { records, particles })
    }

    pub fn write_step(
        &mut self,
        record: &ChainRecord,
        system: &SweepResult,
    ) -> Result<(), AppError> {
        let mut fields = vec![
            TsvField::Uint(record.iteration as u64),
            TsvField::Uint(record.chain as u64),
            TsvField::Uint(record.phase as u64),
            TsvField::Float(record.log_z),
            TsvField::Int(match record.accepted {
                None => -1,
                Some(false) => 0,
                Some(true) => 1,
            }),
        ];
        fields.extend(record.retained.values().iter().map(|&x| TsvField::Float(x)));
        self.records.row(fields)?;
        if let Some(particles) = self.particles.as_mut() {
            sweep_rows(particles, record.iteration, record.chain, record.phase, system)?;
        }
        Ok(())
    }
}

impl BaselineSink for ChainFileSink {
    fn on_init(
        &mut self,
        chain: usize,
        sweep: &SweepResult,
        retained: &Trajectory,
    ) -> Result<(), Error> {
        let record = ChainRecord {
            chain,
            iteration: 0,
            phase: 0,
            retained: retained.clone(),
            log_z: sweep.log_z_hat(),
            accepted: None,
        };
        self.write_step(&record, sweep)
            .map_err(|e| Error::Sink(e.to_string()))
    }

    fn on_step(&mut self, record: &ChainRecord, system: &SweepResult) -> Result<(), Error> {
        self.write_step(record, system)
            .map_err(|e| Error::Sink(e.to_string()))
    }

    fn finish(&mut self) -> Result<(), Error> {
        let flush = |sink: &mut ChainFileSink| -> Result<(), AppError> {
            sink.records.flush()?;
            if let Some(p) = sink.particles.as_mut() {
                p.flush()?;
            }
            Ok(())
        };
        flush(self).map_err(|e| Error::Sink(e.to_string()))
    }
}

fn data_lines(path: &Path) -> Result<impl Iterator<Item = Result<String, std::io::Error>>, AppError> {
    let file = File::open(path).map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
    Ok(BufReader::new(file)
        .lines()
        .filter(|line| !matches!(line, Ok(l) if l.starts_with('#') || l.trim().is_empty())))
}

fn parse_fields(line: &str, path: &Path) -> Result<Vec<f64>, AppError> {
    line.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                AppError::Config(format!("{}: bad value '{tok}'", path.display()))
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PoolRecordRow {
    pub r: usize,
    pub node: usize,
    pub log_z: f64,
    pub conditional: bool,
    pub slot: Option<usize>,
    pub b: Option<usize>,
    pub retained: Vec<f64>,
}

pub fn read_pool_records(dir: &Path) -> Result<Vec<PoolRecordRow>, AppError> {
    let path = dir.join(RECORDS_FILE);
    let mut rows = Vec::new();
    for line in data_lines(&path)? {
        let line = line?;
        let fields = parse_fields(&line, &path)?;
        if fields.len() < 6 {
            return Err(AppError::Config(format!(
                "{}: row has {} fields, expected at least 6",
                path.display(),
                fields.len()
            )));
        }
        let conditional = fields[3] != 0.0;
        rows.push(PoolRecordRow {
            r: fields[0] as usize,
            node: fields[1] as usize,
            log_z: fields[2],
            conditional,
            slot: (fields[4] >= 0.0).then_some(fields[4] as usize),
            b: (fields[5] >= 0.0).then_some(fields[5] as usize),
            retained: fields[6..].to_vec(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct ChainRecordRow {
    pub r: usize,
    pub chain: usize,
    pub phase: usize,
    pub log_z: f64,
    pub accepted: Option<bool>,
    pub retained: Vec<f64>,
}

pub fn read_chain_records(dir: &Path) -> Result<Vec<ChainRecordRow>, AppError> {
    let path = dir.join(RECORDS_FILE);
    let mut rows = Vec::new();
    for line in data_lines(&path)? {
        let line = line?;
        let fields = parse_fields(&line, &path)?;
        if fields.len() < 5 {
            return Err(AppError::Config(format!(
                "{}: row has {} fields, expected at least 5",
                path.display(),
                fields.len()
            )));
        }
        rows.push(ChainRecordRow {
            r: fields[0] as usize,
            chain: fields[1] as usize,
            phase: fields[2] as usize,
            log_z: fields[3],
            accepted: match fields[4] as i64 {
                -1 => None,
                0 => Some(false),
                _ => Some(true),
            },
            retained: fields[5..].to_vec(),
        });
    }
    Ok(rows)
}

/// Per-iteration Gibbs weight rows: `zeta[r - 1][slot][node]` for
/// iterations `1..=R`.
pub fn read_zeta(dir: &Path, p: usize, m: usize) -> Result<Vec<Vec<Vec<f64>>>, AppError> {
    let path = dir.join(ZETA_FILE);
    let mut per_iteration: Vec<Vec<Vec<f64>>> = Vec::new();
    for line in data_lines(&path)? {
        let line = line?;
        let fields = parse_fields(&line, &path)?;
        if fields.len() != 4 {
            return Err(AppError::Config(format!(
                "{}: zeta row must have 4 fields",
                path.display()
            )));
        }
        let (r, slot, node, z) = (
            fields[0] as usize,
            fields[1] as usize,
            fields[2] as usize,
            fields[3],
        );
        if r == 0 || slot >= p || node >= m {
            return Err(AppError::Config(format!(
                "{}: zeta indices out of range (r={r}, slot={slot}, node={node})",
                path.display()
            )));
        }
        if per_iteration.len() < r {
            per_iteration.resize_with(r, || vec![vec![0.0; m]; p]);
        }
        per_iteration[r - 1][slot][node] = z;
    }
    Ok(per_iteration)
}

/// Rebuilds the particle systems from a particle dump, grouped per
/// iteration in node order. Returns `(iteration, node, phase, sweep)`
/// tuples in file order.
pub fn read_particle_systems(
    dir: &Path,
) -> Result<Vec<(usize, usize, usize, SweepResult)>, AppError> {
    let path = dir.join(PARTICLES_FILE);
    struct Pending {
        r: usize,
        node: usize,
        phase: usize,
        rows: Vec<(usize, usize, i64, f64, Vec<f64>)>,
    }
    let mut out = Vec::new();
    let mut pending: Option<Pending> = None;

    let finish = |p: Pending,
                  out: &mut Vec<(usize, usize, usize, SweepResult)>|
     -> Result<(), AppError> {
        let steps = p.rows.iter().map(|r| r.0).max().unwrap() + 1;
        let n = p.rows.iter().map(|r| r.1).max().unwrap() + 1;
        let dim = p.rows[0].4.len();
        let mut grid = ParticleGrid::zeros(dim, n, steps);
        let mut ancestors = vec![vec![0u32; n]; steps - 1];
        let mut log_weights = vec![0.0; steps * n];
        for (t, i, ancestor, lw, state) in p.rows {
            grid.set_state(t, i, &state);
            log_weights[t * n + i] = lw;
            if t > 0 {
                ancestors[t - 1][i] = ancestor as u32;
            }
        }
        let sweep = SweepResult::from_parts(grid, ancestors, log_weights)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        out.push((p.r, p.node, p.phase, sweep));
        Ok(())
    };

    for line in data_lines(&path)? {
        let line = line?;
        let fields = parse_fields(&line, &path)?;
        if fields.len() < 8 {
            return Err(AppError::Config(format!(
                "{}: particle row must have at least 8 fields",
                path.display()
            )));
        }
        let (r, node, phase) = (fields[0] as usize, fields[1] as usize, fields[2] as usize);
        let row = (
            fields[3] as usize,
            fields[4] as usize,
            fields[5] as i64,
            fields[6],
            fields[7..].to_vec(),
        );
        match pending.as_mut() {
            Some(p) if p.r == r && p.node == node && p.phase == phase => p.rows.push(row),
            _ => {
                if let Some(p) = pending.take() {
                    finish(p, &mut out)?;
                }
                pending = Some(Pending {
                    r,
                    node,
                    phase,
                    rows: vec![row],
                });
            }
        }
    }
    if let Some(p) = pending.take() {
        finish(p, &mut out)?;
    }
    Ok(out)
}

/// Groups flat retained values into a trajectory.
pub fn trajectory_from_flat(dim: usize, values: Vec<f64>) -> Result<Trajectory, AppError> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(AppError::Config(format!(
            "retained vector of length {} is not a multiple of dim {dim}",
            values.len()
        )));
    }
    Ok(Trajectory::new(dim, values))
}

pub fn records_path(dir: &Path) -> PathBuf {
    dir.join(RECORDS_FILE)
}

pub fn particles_present(dir: &Path) -> bool {
    dir.join(PARTICLES_FILE).exists()
}
