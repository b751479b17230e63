//! End-to-end harness tests: determinism of emitted files, metric
//! recomputation, seed-matched sampler equivalence, sweep resumption, and
//! the oracle files.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ipmcmc_cli::config::RunConfig;
use ipmcmc_cli::oracle::OracleConfig;
use ipmcmc_cli::runner::run_with_config;
use ipmcmc_cli::sweep::{cmd_sweep, SweepConfig};

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run_toml(sampler: &str, seed: u64, out: &Path, extra_exp: &str, model: &str) -> String {
    format!(
        r#"
[experiment]
sampler = "{sampler}"
seed = {seed}
iterations = 30
nodes = 4
particles = 8
output_dir = "{}"
{extra_exp}

[model]
{model}
"#,
        out.display()
    )
}

const HMM_MODEL: &str = "kind = \"hmm\"\nhorizon = 3\ndataset_seed = 5";

#[test]
fn rerun_with_same_config_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for (dir_name, workers) in [("a", 1usize), ("b", 1), ("c", 4)] {
        let out = tmp.path().join(dir_name);
        let text = run_toml(
            "ipmcmc",
            9,
            &out,
            &format!("conditional = 2\nworker_count = {workers}\nmetrics = [\"mse\", \"ess\", \"switch-rate\"]"),
            HMM_MODEL,
        );
        let config: RunConfig = toml::from_str(&text).unwrap();
        config.validate().unwrap();
        run_with_config(&config).unwrap();
    }
    for file in [
        "records.tsv",
        "zeta.tsv",
        "dataset.tsv",
        "estimates.tsv",
        "mse_per_t.tsv",
        "mse_vs_r.tsv",
        "ess.tsv",
        "summary.toml",
    ] {
        let a = read(&tmp.path().join("a").join(file));
        let b = read(&tmp.path().join("b").join(file));
        let c = read(&tmp.path().join("c").join(file));
        assert_eq!(a, b, "{file} differs across reruns");
        assert_eq!(a, c, "{file} differs across worker counts");
    }
    // The manifests differ only in output_dir and worker_count, which are
    // resolved config; records must still agree because the sampler ignores
    // both.
}

#[test]
fn degenerate_pool_and_multi_start_pg_emit_identical_estimate_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let pool_out = tmp.path().join("pool");
    let pool_text = run_toml(
        "ipmcmc",
        77,
        &pool_out,
        "conditional = 4\nmetrics = [\"mse\"]",
        HMM_MODEL,
    );
    let pool: RunConfig = toml::from_str(&pool_text).unwrap();
    pool.validate().unwrap();
    run_with_config(&pool).unwrap();

    let mpg_out = tmp.path().join("mpg");
    let mpg_text = run_toml("mpg", 77, &mpg_out, "metrics = [\"mse\"]", HMM_MODEL);
    let mpg: RunConfig = toml::from_str(&mpg_text).unwrap();
    mpg.validate().unwrap();
    run_with_config(&mpg).unwrap();

    // The manifest hashes differ (different sampler), so compare the data
    // rows, which must be bit-identical.
    let data_rows = |path: &Path| -> Vec<String> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(str::to_string)
            .collect()
    };
    for file in ["estimates.tsv", "mse_per_t.tsv", "mse_vs_r.tsv", "dataset.tsv"] {
        assert_eq!(
            data_rows(&pool_out.join(file)),
            data_rows(&mpg_out.join(file)),
            "{file} differs between P = M pool and matched-seed mPG"
        );
    }
}

#[test]
fn smoke_run_completes_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("smoke");
    let text = format!(
        r#"
[experiment]
sampler = "ipmcmc"
seed = 3
iterations = 100
nodes = 4
conditional = 2
particles = 10
output_dir = "{}"
metrics = ["mse", "ess", "switch-rate"]

[model]
kind = "hmm"
horizon = 3
"#,
        out.display()
    );
    let config: RunConfig = toml::from_str(&text).unwrap();
    config.validate().unwrap();
    let started = Instant::now();
    run_with_config(&config).unwrap();
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "smoke run took {elapsed:.2?}");
    for file in ["manifest.toml", "records.tsv", "summary.toml"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn metrics_recompute_reproduces_files_bit_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    for sampler in ["ipmcmc", "mapg"] {
        let out = tmp.path().join(sampler);
        let extra = if sampler == "ipmcmc" {
            "conditional = 2\ndump_particles = true\nmetrics = [\"mse\", \"ess\", \"switch-rate\"]"
        } else {
            "dump_particles = true\nmetrics = [\"mse\", \"ess\", \"acceptance\"]"
        };
        let text = run_toml(sampler, 21, &out, extra, HMM_MODEL);
        let config: RunConfig = toml::from_str(&text).unwrap();
        config.validate().unwrap();
        run_with_config(&config).unwrap();

        let metric_files = [
            "estimates.tsv",
            "mse_per_t.tsv",
            "mse_vs_r.tsv",
            "ess.tsv",
            "summary.toml",
        ];
        let originals: Vec<Vec<u8>> =
            metric_files.iter().map(|f| read(&out.join(f))).collect();
        for f in &metric_files {
            std::fs::remove_file(out.join(f)).unwrap();
        }
        ipmcmc_cli::metrics::recompute(&out).unwrap();
        for (f, original) in metric_files.iter().zip(&originals) {
            assert_eq!(
                &read(&out.join(f)),
                original,
                "{sampler}/{f} not reproduced bit-exactly"
            );
        }
    }
}

#[test]
fn recompute_without_particle_dump_names_the_missing_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("nodump");
    let text = run_toml(
        "ipmcmc",
        5,
        &out,
        "conditional = 2\nmetrics = [\"ess\"]",
        HMM_MODEL,
    );
    let config: RunConfig = toml::from_str(&text).unwrap();
    config.validate().unwrap();
    run_with_config(&config).unwrap();
    let err = ipmcmc_cli::metrics::recompute(&out).unwrap_err();
    assert!(err.to_string().contains("particles.tsv"), "{err}");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipmcmc"))
}

#[test]
fn exit_codes_follow_the_contract() {
    let tmp = tempfile::tempdir().unwrap();
    // Config error: P > M.
    let bad = write_config(
        tmp.path(),
        "bad.toml",
        &run_toml(
            "ipmcmc",
            1,
            &tmp.path().join("x"),
            "conditional = 9",
            HMM_MODEL,
        ),
    );
    let status = binary().args(["run", "--config"]).arg(&bad).output().unwrap();
    assert_eq!(status.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&status.stderr);
    assert!(stderr.contains("experiment.conditional"), "{stderr}");

    // Missing config file.
    let status = binary()
        .args(["run", "--config", "does-not-exist.toml"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    // Success.
    let good = write_config(
        tmp.path(),
        "good.toml",
        &run_toml(
            "ipmcmc",
            1,
            &tmp.path().join("ok"),
            "conditional = 2",
            HMM_MODEL,
        ),
    );
    let status = binary().args(["run", "--config"]).arg(&good).output().unwrap();
    assert_eq!(status.status.code(), Some(0));

    // Runtime abort: a dataset containing a symbol with zero probability
    // under every state kills all particle weights mid-sweep.
    let impossible = ipmcmc::models::hmm::DiscreteHmm::new(
        vec![0.5, 0.5],
        vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
    )
    .unwrap();
    let dataset =
        ipmcmc::models::dataset::Dataset::from_hmm(&impossible, 1, &[0, 1, 0], &[1, 0, 1]);
    let dataset_path = tmp.path().join("impossible.tsv");
    dataset.save(&dataset_path).unwrap();
    let rerun = write_config(
        tmp.path(),
        "abort.toml",
        &format!(
            r#"
[experiment]
sampler = "pg"
seed = 1
iterations = 5
nodes = 1
particles = 4
output_dir = "{}"

[model]
kind = "hmm"
dataset = "{}"
"#,
            tmp.path().join("abort-out").display(),
            dataset_path.display()
        ),
    );
    let status = binary().args(["run", "--config"]).arg(&rerun).output().unwrap();
    assert_eq!(status.status.code(), Some(3), "{status:?}");
}

#[test]
fn environment_overrides_output_dir_and_workers() {
    let tmp = tempfile::tempdir().unwrap();
    let ignored = tmp.path().join("ignored");
    let actual = tmp.path().join("actual");
    let config = write_config(
        tmp.path(),
        "env.toml",
        &run_toml("ipmcmc", 2, &ignored, "conditional = 2", HMM_MODEL),
    );
    let status = binary()
        .args(["run", "--config"])
        .arg(&config)
        .env("IPMCMC_OUTPUT_DIR", &actual)
        .env("IPMCMC_WORKER_COUNT", "2")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{status:?}");
    assert!(actual.join("records.tsv").exists());
    assert!(!ignored.exists());
    let manifest = std::fs::read_to_string(actual.join("manifest.toml")).unwrap();
    assert!(manifest.contains("worker_count = 2"));
}

#[test]
fn conditional_count_sweep_runs_and_resumes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let text = format!(
        r#"
[sweep]
kind = "conditional-count"
output_dir = "{}"
seed = 4
nodes = [3]
conditional = [1, 3]
dataset_seeds = [0, 1, 2]
iterations = 40
particles = 8

[model]
kind = "hmm"
horizon = 3
"#,
        out.display()
    );
    let path = write_config(tmp.path(), "sweep.toml", &text);
    let config = SweepConfig::load(&path).unwrap();
    let _ = config;
    cmd_sweep(&path).unwrap();
    let table = std::fs::read_to_string(out.join("sweep_errors.tsv")).unwrap();
    let data_rows: Vec<&str> = table
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .collect();
    assert_eq!(data_rows.len(), 2, "{table}");
    // The P = M row is the normalizer, so its median is exactly 1.
    let pm_row: Vec<&str> = data_rows
        .iter()
        .find(|l| l.starts_with("3 3"))
        .unwrap()
        .split_whitespace()
        .collect();
    assert_eq!(pm_row[2], "1");

    // Resumption: wipe one cell, leave a sentinel in another; rerunning
    // must recreate only the missing cell.
    let gone = out.join("cells/m3_p1_d0");
    std::fs::remove_dir_all(&gone).unwrap();
    let kept_sentinel = out.join("cells/m3_p1_d1/sentinel");
    std::fs::write(&kept_sentinel, "untouched").unwrap();
    cmd_sweep(&path).unwrap();
    assert!(gone.join("done").exists(), "missing cell not re-run");
    assert!(kept_sentinel.exists(), "finished cell was re-run");
}

#[test]
fn oracle_writes_ground_truth_files() {
    let tmp = tempfile::tempdir().unwrap();
    // Linear-Gaussian smoother moments.
    let lg = tmp.path().join("lg");
    let text = format!(
        "[oracle]\noutput_dir = \"{}\"\n\n[model]\nkind = \"lgssm1d\"\nhorizon = 6\ndataset_seed = 2\n",
        lg.display()
    );
    let path = write_config(tmp.path(), "lg.toml", &text);
    let config = OracleConfig::load(&path).unwrap();
    let _ = config;
    ipmcmc_cli::oracle::cmd_oracle(&path).unwrap();
    let rts = std::fs::read_to_string(lg.join("oracle_rts.tsv")).unwrap();
    assert!(rts.contains("log_evidence"));
    assert_eq!(
        rts.lines().filter(|l| !l.starts_with('#')).count(),
        6,
        "one row per step"
    );

    // Exact discrete marginals.
    let hm = tmp.path().join("hm");
    let text = format!(
        "[oracle]\noutput_dir = \"{}\"\n\n[model]\nkind = \"hmm\"\nhorizon = 4\n",
        hm.display()
    );
    let path = write_config(tmp.path(), "hm.toml", &text);
    ipmcmc_cli::oracle::cmd_oracle(&path).unwrap();
    let marginals = std::fs::read_to_string(hm.join("oracle_marginals.tsv")).unwrap();
    assert_eq!(
        marginals.lines().filter(|l| !l.starts_with('#')).count(),
        8,
        "steps x states rows"
    );

    // Nonlinear reference histograms from high-particle sweeps.
    let nl = tmp.path().join("nl");
    let text = format!(
        r#"
[oracle]
output_dir = "{}"
reference_particles = 2000
reference_sweeps = 2
histogram_bins = 20

[model]
kind = "nlssm"
horizon = 12
dataset_seed = 3
"#,
        nl.display()
    );
    let path = write_config(tmp.path(), "nl.toml", &text);
    ipmcmc_cli::oracle::cmd_oracle(&path).unwrap();
    let hist = std::fs::read_to_string(nl.join("oracle_histograms.tsv")).unwrap();
    let rows: Vec<&str> = hist.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3 * 20, "three steps x bins");
    // Each step's histogram is a probability distribution over bins.
    for chunk in rows.chunks(20) {
        let total: f64 = chunk
            .iter()
            .map(|l| l.split_whitespace().last().unwrap().parse::<f64>().unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "histogram mass {total}");
    }
}

#[test]
fn nlssm_run_with_histograms_emits_weighted_marginals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("hist");
    let text = format!(
        r#"
[experiment]
sampler = "ipmcmc"
seed = 6
iterations = 25
nodes = 4
conditional = 2
particles = 12
output_dir = "{}"
metrics = ["ess"]
histogram_steps = [0, 5, 11]
histogram_bins = 16

[model]
kind = "nlssm"
horizon = 12
dataset_seed = 8
"#,
        out.display()
    );
    let config: RunConfig = toml::from_str(&text).unwrap();
    config.validate().unwrap();
    run_with_config(&config).unwrap();
    let hist = std::fs::read_to_string(out.join("histograms.tsv")).unwrap();
    let rows = hist.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 3 * 16);
}
