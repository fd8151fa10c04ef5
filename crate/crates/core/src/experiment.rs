//! Beta-pair benchmark harness.
//!
//! Each `(row, dims, run)` cell draws its X and Y samples from an independent
//! stream whose id is a stable hash of the cell, runs every configured
//! estimator on the shared Gram blocks, and yields one record per estimator.
//! Records are sorted before writing, so the output does not depend on worker
//! count or row order. Wall-clock times go to a separate timing file for the
//! same reason.

use crate::error::{Error, Result};
use crate::estimators::{
    estimate_norm_ball_from_blocks, estimate_nwj_from_blocks, estimate_restricted_from_blocks, EstimateResult,
    EstimatorConfig, LambdaRule,
};
use crate::generators::{kl_beta_closed_form, make_generator, BetaParams};
use crate::kernels::{gram_blocks, pooled_variance_bandwidth};
use crate::sampling::{embed_with_noise, sample_beta, SeededStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::cmp::Ordering;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Restricted,
    NormBall,
    Nwj,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Restricted => "restricted",
            EstimatorKind::NormBall => "norm_ball",
            EstimatorKind::Nwj => "nwj",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub p: BetaParams,
    pub q: BetaParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

fn default_generator() -> String {
    "kl".into()
}

fn default_lambda_c() -> f64 {
    1.0
}

fn default_noise_variance() -> f64 {
    0.01
}

// The KKT residual of an n = 100 solve bottoms out near 1e-9 in round-off.
fn default_solver_tol() -> f64 {
    1e-8
}

/// Benchmark configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Samples per side.
    pub n: usize,
    pub runs: usize,
    /// Data dimensions to run; 1 is the raw beta sample, d > 1 appends d − 1
    /// Gaussian noise columns.
    pub dims: Vec<usize>,
    #[serde(default = "default_noise_variance")]
    pub noise_variance: f64,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_generator")]
    pub generator: String,
    /// λₙ = lambda_c / n
    #[serde(default = "default_lambda_c")]
    pub lambda_c: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    pub rows: Vec<RowSpec>,
    pub output: Option<OutputSpec>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n < 2 {
            problems.push(format!("n: must be at least 2, got {}", self.n));
        }
        if self.runs < 1 {
            problems.push("runs: must be at least 1".to_string());
        }
        if self.dims.is_empty() {
            problems.push("dims: must list at least one dimension".to_string());
        }
        if self.dims.contains(&0) {
            problems.push("dims: every entry must be at least 1".to_string());
        }
        let mut sorted_dims = self.dims.clone();
        sorted_dims.sort_unstable();
        sorted_dims.dedup();
        if sorted_dims.len() != self.dims.len() {
            problems.push("dims: entries must be distinct".to_string());
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            problems.push(format!("noise_variance: must be positive, got {}", self.noise_variance));
        }
        if self.estimators.is_empty() {
            problems.push("estimators: must list at least one estimator".to_string());
        }
        match make_generator(&self.generator) {
            Ok(_) if self.generator != "kl" => problems.push(format!(
                "generator: `{}` has no closed-form beta truth; only `kl` is supported by the harness",
                self.generator
            )),
            Ok(_) => {}
            Err(e) => problems.push(format!("generator: {e}")),
        }
        if !(self.lambda_c > 0.0) || !self.lambda_c.is_finite() {
            problems.push(format!("lambda_c: must be positive, got {}", self.lambda_c));
        }
        if !(self.solver_tol > 0.0) {
            problems.push(format!("solver_tol: must be positive, got {}", self.solver_tol));
        }
        if self.rows.is_empty() {
            problems.push("rows: must list at least one beta pair".to_string());
        }
        for (i, row) in self.rows.iter().enumerate() {
            for (label, params) in [("p", row.p), ("q", row.q)] {
                if let Err(e) = params.validate() {
                    problems.push(format!("rows[{i}].{label}: {e}"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// SHA-256 of the configuration without its output section, hex-encoded
    /// and truncated to 16 characters. List order does not affect the results,
    /// so lists are sorted first.
    pub fn fingerprint(&self) -> String {
        let mut stripped = self.clone();
        stripped.output = None;
        stripped.dims.sort_unstable();
        stripped.estimators.sort_unstable();
        stripped.rows.sort_by(|a, b| {
            let key = |r: &RowSpec| [r.p.alpha, r.p.beta, r.q.alpha, r.q.beta];
            let (ka, kb) = (key(a), key(b));
            ka.iter()
                .zip(kb.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        });
        let canonical = serde_json::to_string(&stripped).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn record_count(&self) -> usize {
        self.rows.len() * self.dims.len() * self.runs * self.estimators.len()
    }
}

/// One estimate of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub p: String,
    pub q: String,
    pub dims: usize,
    pub estimator: EstimatorKind,
    pub run: usize,
    pub seed: u64,
    pub stream_id: u64,
    pub n: usize,
    pub estimate: f64,
    pub true_kl: f64,
    pub squared_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `ok`, or the error that prevented an estimate.
    pub status: String,
    pub config_fingerprint: String,
    /// Informational; written to the timing file only.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

impl ResultRecord {
    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.true_kl
            .total_cmp(&other.true_kl)
            .then_with(|| self.p.cmp(&other.p))
            .then_with(|| self.q.cmp(&other.q))
            .then_with(|| self.dims.cmp(&other.dims))
            .then_with(|| self.estimator.cmp(&other.estimator))
            .then_with(|| self.run.cmp(&other.run))
    }
}

/// FNV-1a over the cell coordinates: stable across platforms and independent
/// of row order.
pub fn stream_id_for(row: &RowSpec, dims: usize, run: usize) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let words = [
        row.p.alpha.to_bits(),
        row.p.beta.to_bits(),
        row.q.alpha.to_bits(),
        row.q.beta.to_bits(),
        dims as u64,
        run as u64,
    ];
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    }
    h
}

struct Cell {
    row: RowSpec,
    true_kl: f64,
    dims: usize,
    run: usize,
}

fn run_cell(
    config: &ExperimentConfig,
    estimator_config: &EstimatorConfig,
    fingerprint: &str,
    cell: &Cell,
) -> Vec<ResultRecord> {
    let stream_id = stream_id_for(&cell.row, cell.dims, cell.run);
    let started = Instant::now();
    let mut stream = SeededStream::new(config.seed, stream_id);

    let prepared = (|| -> Result<_> {
        let x = sample_beta(&mut stream, cell.row.p, config.n)?;
        let y = sample_beta(&mut stream, cell.row.q, config.n)?;
        let x = embed_with_noise(&mut stream, &x, cell.dims - 1, config.noise_variance)?;
        let y = embed_with_noise(&mut stream, &y, cell.dims - 1, config.noise_variance)?;
        let spec = pooled_variance_bandwidth(&x.points, &y.points)?;
        gram_blocks(&x.points, &y.points, &spec)
    })();
    let setup_ms = started.elapsed().as_secs_f64() * 1e3;

    config
        .estimators
        .iter()
        .map(|&kind| {
            let t0 = Instant::now();
            let outcome: Result<EstimateResult> = match &prepared {
                Ok(blocks) => match kind {
                    EstimatorKind::Restricted => estimate_restricted_from_blocks(blocks.clone(), estimator_config),
                    EstimatorKind::NormBall => estimate_norm_ball_from_blocks(blocks.clone(), estimator_config),
                    EstimatorKind::Nwj => estimate_nwj_from_blocks(blocks.clone(), estimator_config),
                },
                Err(e) => Err(Error::Precondition(e.to_string())),
            };
            let wall_time_ms = setup_ms + t0.elapsed().as_secs_f64() * 1e3;
            let (estimate, iterations, converged, status) = match outcome {
                Ok(r) => {
                    let status = if r.report.converged {
                        "ok".to_string()
                    } else {
                        "not_converged".to_string()
                    };
                    (r.divergence_estimate, r.report.iterations, r.report.converged, status)
                }
                Err(e) => (f64::NAN, 0, false, format!("error: {e}")),
            };
            let err = estimate - cell.true_kl;
            ResultRecord {
                p: cell.row.p.to_string(),
                q: cell.row.q.to_string(),
                dims: cell.dims,
                estimator: kind,
                run: cell.run,
                seed: config.seed,
                stream_id,
                n: config.n,
                estimate,
                true_kl: cell.true_kl,
                squared_error: err * err,
                iterations,
                converged,
                status,
                config_fingerprint: fingerprint.to_string(),
                wall_time_ms,
            }
        })
        .collect()
}

/// Runs every (row, dims, run, estimator) combination on `workers` threads
/// and returns the records in their canonical order.
pub fn run_experiment(config: &ExperimentConfig, workers: usize) -> Result<Vec<ResultRecord>> {
    config.validate()?;
    if workers == 0 {
        return Err(Error::Precondition("workers must be at least 1".into()));
    }
    let generator = make_generator(&config.generator)?;
    let mut estimator_config = EstimatorConfig::new(generator);
    estimator_config.lambda_rule = LambdaRule::Schedule { c: config.lambda_c };
    estimator_config.solver_tol = config.solver_tol;
    let fingerprint = config.fingerprint();

    let mut cells = Vec::new();
    for row in &config.rows {
        // The noise columns are shared by P and Q and cancel in the KL, so the
        // truth is the 1-d value for every dimension.
        let true_kl = kl_beta_closed_form(row.p, row.q)?;
        for &dims in &config.dims {
            for run in 0..config.runs {
                cells.push(Cell {
                    row: *row,
                    true_kl,
                    dims,
                    run,
                });
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker pool: {e}")))?;
    let mut records: Vec<ResultRecord> = pool.install(|| {
        cells
            .par_iter()
            .flat_map_iter(|cell| run_cell(config, &estimator_config, &fingerprint, cell))
            .collect()
    });
    records.sort_by(ResultRecord::sort_key_cmp);
    Ok(records)
}

/// Mean estimate and MSE for one (row, dims, estimator) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub p: String,
    pub q: String,
    pub dims: usize,
    pub estimator: EstimatorKind,
    pub true_kl: f64,
    pub mean_estimate: f64,
    pub mse: f64,
    /// Records with a finite estimate (the mean and MSE are over these).
    pub runs_ok: usize,
    pub runs_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_fingerprint: String,
    pub seed: u64,
    pub n: usize,
    pub runs: usize,
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    pub fn find(&self, p: &str, q: &str, dims: usize, estimator: EstimatorKind) -> Option<&SummaryEntry> {
        self.entries
            .iter()
            .find(|e| e.p == p && e.q == q && e.dims == dims && e.estimator == estimator)
    }
}

/// Aggregates records (in canonical order) into per-group means and MSEs.
pub fn summarize(config: &ExperimentConfig, records: &[ResultRecord]) -> Summary {
    let mut entries: Vec<SummaryEntry> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new();
    for r in records {
        let position = entries
            .iter()
            .position(|e| e.p == r.p && e.q == r.q && e.dims == r.dims && e.estimator == r.estimator);
        let idx = match position {
            Some(i) => i,
            None => {
                entries.push(SummaryEntry {
                    p: r.p.clone(),
                    q: r.q.clone(),
                    dims: r.dims,
                    estimator: r.estimator,
                    true_kl: r.true_kl,
                    mean_estimate: 0.0,
                    mse: 0.0,
                    runs_ok: 0,
                    runs_failed: 0,
                });
                sums.push((0.0, 0.0));
                entries.len() - 1
            }
        };
        if r.estimate.is_finite() {
            entries[idx].runs_ok += 1;
            sums[idx].0 += r.estimate;
            sums[idx].1 += r.squared_error;
        } else {
            entries[idx].runs_failed += 1;
        }
    }
    for (e, (s, se)) in entries.iter_mut().zip(sums) {
        let k = e.runs_ok as f64;
        e.mean_estimate = if e.runs_ok > 0 { s / k } else { f64::NAN };
        e.mse = if e.runs_ok > 0 { se / k } else { f64::NAN };
    }
    Summary {
        config_fingerprint: config.fingerprint(),
        seed: config.seed,
        n: config.n,
        runs: config.runs,
        entries,
    }
}

pub fn write_records(path: &Path, format: OutputFormat, records: &[ResultRecord]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for r in records {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Jsonl => {
            let mut text = String::new();
            for r in records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            std::fs::write(path, text)?;
        }
    }
    Ok(())
}

/// `<results>.timing.csv`: the per-record wall-clock times.
pub fn timing_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".timing.csv");
    results.with_file_name(name)
}

/// `<results>.summary.json`
pub fn summary_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(".summary.json");
    results.with_file_name(name)
}

pub fn write_timing(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["p", "q", "dims", "estimator", "run", "wall_time_ms"])?;
    for r in records {
        w.write_record([
            r.p.clone(),
            r.q.clone(),
            r.dims.to_string(),
            r.estimator.to_string(),
            r.run.to_string(),
            format!("{:.3}", r.wall_time_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
