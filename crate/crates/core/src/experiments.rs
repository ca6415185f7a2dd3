//! Seeded experiment drivers: relative-gap scans, Krylov versus Taylor
//! comparisons, shadow estimation, exact-match scatter and entanglement
//! detection.
//!
//! An experiment is a pure function of its [`ExperimentConfig`]. Trial `t`
//! draws its state from `derive_seed(seed, t)`, trials run in parallel and
//! rows are collected in trial order, so the CSV is identical for any worker
//! count. Floats are printed with Rust's shortest round-trip formatting.
//!
//! Config files are TOML. Every key except `experiment` is optional and
//! falls back to the per-experiment defaults of [`ExperimentConfig::defaults`]:
//!
//! ```toml
//! experiment = "shadow_estimate"
//! num_qubits = 4
//! orders = [1, 2, 3]
//! taylor_orders = [5]
//! shots_grid = [10000, 100000, 1000000]
//! repeats = 10
//! ensemble = "rank_r"
//! rank = 2
//! seed = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{kappa, krylov_ladder, relative_gap, taylor_bound, theorem1_envelope};
use crate::ensembles::{EnsembleKind, EnsembleSpec, NoiseKind};
use crate::error::{Error, Result};
use crate::numeric::derive_seed;
use crate::qcore::{collective_z, qubit_dim, DensityMatrix, Observable, TransitionTable, DEFAULT_MAX_QUBITS};
use crate::shadows::{
    batch_means, estimate_krylov_from_batches, estimate_taylor_from_batches, sample_shadows, ShadowBatch,
    SolveStrategy,
};

/// Relative deviation counted as "on the diagonal" in the scatter summary.
pub const SCATTER_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GapScan,
    CompareTaylor,
    ShadowEstimate,
    ExactMatchScatter,
    Detect,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GapScan => "gap_scan",
            ExperimentKind::CompareTaylor => "compare_taylor",
            ExperimentKind::ShadowEstimate => "shadow_estimate",
            ExperimentKind::ExactMatchScatter => "exact_match_scatter",
            ExperimentKind::Detect => "detect",
        }
    }

    /// Fixed CSV column order.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ExperimentKind::GapScan => &[
                "trial", "n", "n_star", "kappa", "relative_gap", "envelope", "below_envelope", "is_average",
                "trial_seed", "seed", "config_hash",
            ],
            ExperimentKind::CompareTaylor => &[
                "trial", "n", "krylov_gap", "taylor_order", "taylor_gap", "envelope", "kappa", "krylov_le_taylor",
                "trial_seed", "seed", "config_hash",
            ],
            ExperimentKind::ShadowEstimate => &[
                "shots", "repeat", "estimator", "order", "batches", "estimate", "exact_bound", "qfi", "rel_dev_qfi",
                "rel_dev_bound", "solve", "status", "shot_seed", "seed", "config_hash",
            ],
            ExperimentKind::ExactMatchScatter => &[
                "trial", "shots", "order", "estimate", "qfi", "rel_dev", "within_tolerance", "solve", "status",
                "trial_seed", "seed", "config_hash",
            ],
            ExperimentKind::Detect => &[
                "epsilon", "bound", "order", "detected", "qfi_detected", "ratio", "states", "seed", "config_hash",
            ],
        }
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub num_qubits: usize,
    pub trials: usize,
    /// Krylov orders.
    pub orders: Vec<usize>,
    /// Taylor orders for `shadow_estimate` and `detect`.
    pub taylor_orders: Vec<usize>,
    pub shots_grid: Vec<u64>,
    pub epsilon_grid: Vec<f64>,
    pub ensemble: EnsembleKind,
    pub rank: Option<usize>,
    pub noise_kind: NoiseKind,
    pub seed: u64,
    /// Seeds per shot count in `shadow_estimate`.
    pub repeats: usize,
    /// Feed the estimators the exact state instead of sampled shadows.
    pub noiseless: bool,
    /// Thread count; 0 lets rayon decide. Not part of the config hash.
    pub workers: usize,
    /// Output directory. Not part of the config hash.
    pub out_path: Option<String>,
}

/// Partial config as read from TOML or collected from CLI flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub experiment: Option<ExperimentKind>,
    pub num_qubits: Option<usize>,
    pub trials: Option<usize>,
    pub orders: Option<Vec<usize>>,
    pub taylor_orders: Option<Vec<usize>>,
    pub shots_grid: Option<Vec<u64>>,
    pub epsilon_grid: Option<Vec<f64>>,
    pub ensemble: Option<EnsembleKind>,
    pub rank: Option<usize>,
    pub noise_kind: Option<NoiseKind>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub noiseless: Option<bool>,
    pub workers: Option<usize>,
    pub out_path: Option<String>,
}

impl ConfigPatch {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fields set in `other` win.
    pub fn merge(self, other: ConfigPatch) -> ConfigPatch {
        ConfigPatch {
            experiment: other.experiment.or(self.experiment),
            num_qubits: other.num_qubits.or(self.num_qubits),
            trials: other.trials.or(self.trials),
            orders: other.orders.or(self.orders),
            taylor_orders: other.taylor_orders.or(self.taylor_orders),
            shots_grid: other.shots_grid.or(self.shots_grid),
            epsilon_grid: other.epsilon_grid.or(self.epsilon_grid),
            ensemble: other.ensemble.or(self.ensemble),
            rank: other.rank.or(self.rank),
            noise_kind: other.noise_kind.or(self.noise_kind),
            seed: other.seed.or(self.seed),
            repeats: other.repeats.or(self.repeats),
            noiseless: other.noiseless.or(self.noiseless),
            workers: other.workers.or(self.workers),
            out_path: other.out_path.or(self.out_path),
        }
    }

    /// Fill unset fields from the defaults of the selected experiment.
    pub fn resolve(self, fallback: Option<ExperimentKind>) -> Result<ExperimentConfig> {
        let kind = match (self.experiment, fallback) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!(
                    "config is for experiment '{}' but '{}' was requested",
                    a.name(),
                    b.name()
                )))
            }
            (Some(a), _) | (None, Some(a)) => a,
            (None, None) => return Err(Error::Config("no experiment selected".into())),
        };
        let d = ExperimentConfig::defaults(kind);
        let rank = match (self.rank, self.ensemble) {
            (Some(r), _) => Some(r),
            (None, Some(e)) if e != d.ensemble => None,
            (None, _) => d.rank,
        };
        let config = ExperimentConfig {
            experiment: kind,
            num_qubits: self.num_qubits.unwrap_or(d.num_qubits),
            trials: self.trials.unwrap_or(d.trials),
            orders: self.orders.unwrap_or(d.orders),
            taylor_orders: self.taylor_orders.unwrap_or(d.taylor_orders),
            shots_grid: self.shots_grid.unwrap_or(d.shots_grid),
            epsilon_grid: self.epsilon_grid.unwrap_or(d.epsilon_grid),
            ensemble: self.ensemble.unwrap_or(d.ensemble),
            rank,
            noise_kind: self.noise_kind.unwrap_or(d.noise_kind),
            seed: self.seed.unwrap_or(d.seed),
            repeats: self.repeats.unwrap_or(d.repeats),
            noiseless: self.noiseless.unwrap_or(d.noiseless),
            workers: self.workers.unwrap_or(d.workers),
            out_path: self.out_path.or(d.out_path),
        };
        config.validate()?;
        Ok(config)
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = ExperimentConfig {
            experiment: kind,
            num_qubits: 4,
            trials: 100,
            orders: (1..=6).collect(),
            taylor_orders: vec![],
            shots_grid: vec![],
            epsilon_grid: vec![],
            ensemble: EnsembleKind::FullrankHs,
            rank: None,
            noise_kind: NoiseKind::default(),
            seed: 0,
            repeats: 1,
            noiseless: false,
            workers: 0,
            out_path: None,
        };
        match kind {
            ExperimentKind::GapScan => base,
            ExperimentKind::CompareTaylor => ExperimentConfig { trials: 1, ..base },
            ExperimentKind::ShadowEstimate => ExperimentConfig {
                trials: 1,
                orders: vec![1, 2, 3],
                taylor_orders: vec![5],
                shots_grid: vec![10_000, 100_000, 1_000_000],
                ensemble: EnsembleKind::RankR,
                rank: Some(2),
                repeats: 10,
                ..base
            },
            ExperimentKind::ExactMatchScatter => ExperimentConfig {
                orders: vec![3],
                shots_grid: vec![1_000_000],
                ensemble: EnsembleKind::RankR,
                rank: Some(2),
                ..base
            },
            ExperimentKind::Detect => ExperimentConfig {
                trials: 500,
                orders: vec![1, 2, 3],
                taylor_orders: vec![1, 3, 5],
                epsilon_grid: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
                ensemble: EnsembleKind::NoiseMixture,
                ..base
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        ConfigPatch::from_toml(text)?.resolve(None)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        qubit_dim(self.num_qubits, DEFAULT_MAX_QUBITS).map_err(|e| Error::Config(e.to_string()))?;
        if self.num_qubits == 0 {
            return bad("num_qubits must be at least 1".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        if self.orders.is_empty() || self.orders.contains(&0) {
            return bad("orders must be a nonempty list of positive integers".into());
        }
        let kind = self.experiment;
        if kind == ExperimentKind::GapScan && self.ensemble != EnsembleKind::FullrankHs {
            return bad("gap_scan draws full-rank states; set ensemble = \"fullrank_hs\"".into());
        }
        if matches!(kind, ExperimentKind::ShadowEstimate | ExperimentKind::ExactMatchScatter) {
            if self.shots_grid.is_empty() {
                return bad(format!("{} needs a nonempty shots_grid", kind.name()));
            }
            if self.repeats == 0 {
                return bad("repeats must be positive".into());
            }
            let most_batches = self
                .orders
                .iter()
                .map(|n| 2 * n + 1)
                .chain(self.taylor_orders.iter().map(|n| n + 2))
                .max()
                .unwrap_or(1) as u64;
            if let Some(&m) = self.shots_grid.iter().find(|&&m| m < most_batches) {
                return bad(format!("shot count {m} is smaller than the {most_batches} batches needed"));
            }
        }
        if kind == ExperimentKind::Detect {
            if self.epsilon_grid.is_empty() {
                return bad("detect needs a nonempty epsilon_grid".into());
            }
            if self.ensemble != EnsembleKind::NoiseMixture {
                return bad("detect draws noise mixtures; set ensemble = \"noise_mixture\"".into());
            }
        }
        if self.ensemble == EnsembleKind::NoiseMixture && self.epsilon_grid.is_empty() {
            return bad("noise_mixture ensemble needs an epsilon_grid".into());
        }
        if let Some(e) = self.epsilon_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return bad(format!("epsilon {e} outside [0, 1]"));
        }
        self.ensemble_spec(0, self.epsilon_grid.first().copied())
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    fn ensemble_spec(&self, seed: u64, epsilon: Option<f64>) -> EnsembleSpec {
        EnsembleSpec {
            kind: self.ensemble,
            dim: self.dim(),
            rank: self.rank,
            epsilon,
            noise_kind: self.noise_kind,
            seed,
        }
    }

    /// Hex SHA-256 of the canonical JSON of this config, with `workers` and
    /// `out_path` cleared.
    pub fn config_hash(&self) -> String {
        let canonical = ExperimentConfig {
            workers: 0,
            out_path: None,
            ..self.clone()
        };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Rows of one experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub experiment: ExperimentKind,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    /// Trials dropped because their QFI vanished.
    pub skipped: usize,
    pub config_hash: String,
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// All values of one column.
    pub fn column(&self, name: &str) -> Vec<&str> {
        let idx = self
            .columns
            .iter()
            .position(|c| *c == name)
            .unwrap_or_else(|| panic!("no column '{name}'"));
        self.rows.iter().map(|r| r[idx].as_str()).collect()
    }

    /// Rows as `(column, value)` lookups, for filtering in tests and examples.
    pub fn records(&self) -> Vec<Record<'_>> {
        self.rows
            .iter()
            .map(|row| Record {
                columns: &self.columns,
                row,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    columns: &'a [&'static str],
    row: &'a [String],
}

impl Record<'_> {
    pub fn get(&self, name: &str) -> &str {
        let idx = self
            .columns
            .iter()
            .position(|c| *c == name)
            .unwrap_or_else(|| panic!("no column '{name}'"));
        &self.row[idx]
    }

    /// Parse a numeric column; empty and `undefined` cells give NaN.
    pub fn num(&self, name: &str) -> f64 {
        self.get(name).parse().unwrap_or(f64::NAN)
    }
}

struct Table {
    kind: ExperimentKind,
    seed: u64,
    hash: String,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(config: &ExperimentConfig) -> Self {
        Table {
            kind: config.experiment,
            seed: config.seed,
            hash: config.config_hash(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, mut cells: Vec<String>) {
        cells.push(self.seed.to_string());
        cells.push(self.hash.clone());
        debug_assert_eq!(cells.len(), self.kind.columns().len());
        self.rows.push(cells);
    }

    fn finish(self, skipped: usize) -> ExperimentOutput {
        ExperimentOutput {
            experiment: self.kind,
            columns: self.kind.columns().to_vec(),
            rows: self.rows,
            skipped,
            config_hash: self.hash,
        }
    }
}

macro_rules! cells {
    ($($x:expr),* $(,)?) => { vec![$($x.to_string()),*] };
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run the experiment selected by `config.experiment`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    match config.experiment {
        ExperimentKind::GapScan => run_gap_scan(config),
        ExperimentKind::CompareTaylor => run_compare_taylor(config),
        ExperimentKind::ShadowEstimate => run_shadow_estimate(config),
        ExperimentKind::ExactMatchScatter => run_exact_match_scatter(config),
        ExperimentKind::Detect => run_detect(config),
    }
}

fn expect_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.experiment != kind {
        return Err(Error::Config(format!(
            "config is for '{}', not '{}'",
            config.experiment.name(),
            kind.name()
        )));
    }
    Ok(())
}

fn draw(config: &ExperimentConfig, seed: u64, epsilon: Option<f64>) -> Result<(DensityMatrix, Observable, TransitionTable)> {
    let rho = config.ensemble_spec(seed, epsilon).sample()?;
    let h = collective_z(config.num_qubits)?;
    let table = TransitionTable::from_state(&rho, &h)?;
    Ok((rho, h, table))
}

fn max_order(config: &ExperimentConfig) -> usize {
    config.orders.iter().copied().max().unwrap_or(1)
}

/// Relative Krylov gaps per trial and order, followed by per-order averages.
pub fn run_gap_scan(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    expect_kind(config, ExperimentKind::GapScan)?;
    struct Trial {
        seed: u64,
        n_star: usize,
        kappa: f64,
        gaps: Vec<f64>,
    }
    let trials: Vec<Option<Trial>> = with_pool(config.workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(config.seed, t as u64);
                let (rho, _, table) = draw(config, seed, None)?;
                let ladder = krylov_ladder(&table, rho.spectrum(), max_order(config));
                let gaps: Result<Vec<f64>> =
                    config.orders.iter().map(|&n| relative_gap(ladder.bound(n), ladder.qfi)).collect();
                match gaps {
                    Ok(gaps) => Ok(Some(Trial {
                        seed,
                        n_star: ladder.n_star,
                        kappa: kappa(rho.spectrum()).kappa,
                        gaps,
                    })),
                    Err(Error::ZeroQfi(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut table = Table::new(config);
    let kept: Vec<&Trial> = trials.iter().flatten().collect();
    for (t, trial) in trials.iter().enumerate() {
        let Some(trial) = trial else { continue };
        for (&n, &gap) in config.orders.iter().zip(&trial.gaps) {
            let env = theorem1_envelope(trial.kappa, n);
            table.push(cells![t, n, trial.n_star, trial.kappa, gap, env, gap <= env + 1e-12, false, trial.seed]);
        }
    }
    for (i, &n) in config.orders.iter().enumerate() {
        let mean = if kept.is_empty() {
            f64::NAN
        } else {
            kept.iter().map(|t| t.gaps[i]).sum::<f64>() / kept.len() as f64
        };
        table.push(cells!["mean", n, "", "", mean, "", "", true, ""]);
    }
    Ok(table.finish(trials.len() - kept.len()))
}

/// Krylov gap of order `n` next to the Taylor gap of order `2n - 1` and the envelope.
pub fn run_compare_taylor(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    expect_kind(config, ExperimentKind::CompareTaylor)?;
    let per_trial: Vec<Option<Vec<Vec<String>>>> = with_pool(config.workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(config.seed, t as u64);
                let (rho, _, table) = draw(config, seed, None)?;
                let ladder = krylov_ladder(&table, rho.spectrum(), max_order(config));
                let k = kappa(rho.spectrum()).kappa;
                let mut rows = Vec::new();
                for &n in &config.orders {
                    let kry = match relative_gap(ladder.bound(n), ladder.qfi) {
                        Ok(g) => g,
                        Err(Error::ZeroQfi(_)) => return Ok(None),
                        Err(e) => return Err(e),
                    };
                    let taylor_order = 2 * n - 1;
                    let tay = relative_gap(taylor_bound(&table, taylor_order).value, ladder.qfi)?;
                    let env = theorem1_envelope(k, n);
                    rows.push(cells![t, n, kry, taylor_order, tay, env, k, kry <= tay + 1e-12, seed]);
                }
                Ok(Some(rows))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut table = Table::new(config);
    let mut skipped = 0;
    for rows in per_trial {
        match rows {
            Some(rows) => rows.into_iter().for_each(|r| table.push(r)),
            None => skipped += 1,
        }
    }
    Ok(table.finish(skipped))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Estimator {
    Krylov(usize),
    Taylor(usize),
}

impl Estimator {
    fn batches(self) -> usize {
        match self {
            Estimator::Krylov(n) => 2 * n + 1,
            Estimator::Taylor(n) => n + 2,
        }
    }

    fn label(self) -> (&'static str, usize) {
        match self {
            Estimator::Krylov(n) => ("krylov", n),
            Estimator::Taylor(n) => ("taylor", n),
        }
    }
}

struct EstimateOutcome {
    value: f64,
    solve: Option<SolveStrategy>,
    status: String,
}

/// Estimate one bound from `2n + 1` (Krylov) or `n + 2` (Taylor) batch means.
fn estimate(batches: &[ShadowBatch], h: &Observable, est: Estimator) -> Result<EstimateOutcome> {
    let result = match est {
        Estimator::Krylov(n) => estimate_krylov_from_batches(batches, h, n).map(|(v, s, _)| (v, Some(s))),
        Estimator::Taylor(n) => estimate_taylor_from_batches(batches, h, n).map(|v| (v, None)),
    };
    match result {
        Ok((value, solve)) => Ok(EstimateOutcome {
            value,
            solve,
            status: "ok".into(),
        }),
        Err(e @ Error::SingularEstimate { .. }) => Ok(EstimateOutcome {
            value: f64::NAN,
            solve: None,
            status: format!("error: {e}"),
        }),
        Err(e) => Err(e),
    }
}

/// Batch means with `count` batches cut from the seeded shadow stream, or
/// copies of the exact state in noiseless mode.
fn batches_for(rho: &DensityMatrix, shots: u64, count: usize, seed: u64, noiseless: bool) -> Result<Vec<ShadowBatch>> {
    if noiseless {
        return Ok(vec![ShadowBatch::exact(rho); count]);
    }
    batch_means(&sample_shadows(rho, shots, count, seed)?)
}

fn solve_label(solve: Option<SolveStrategy>) -> String {
    solve.map(|s| s.to_string()).unwrap_or_default()
}

/// Shadow estimates of Krylov and Taylor bounds of one state across a grid of shot counts.
pub fn run_shadow_estimate(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    expect_kind(config, ExperimentKind::ShadowEstimate)?;
    let (rho, h, table) = draw(config, derive_seed(config.seed, 0), None)?;
    let ladder = krylov_ladder(&table, rho.spectrum(), max_order(config));
    let qfi = ladder.qfi;
    let estimators: Vec<Estimator> = config
        .orders
        .iter()
        .map(|&n| Estimator::Krylov(n))
        .chain(config.taylor_orders.iter().map(|&n| Estimator::Taylor(n)))
        .collect();
    let exact: Vec<f64> = estimators
        .iter()
        .map(|e| match *e {
            Estimator::Krylov(n) => ladder.bound(n),
            Estimator::Taylor(n) => taylor_bound(&table, n).value,
        })
        .collect();

    let shot_stream = derive_seed(config.seed, 1);
    let tasks: Vec<(usize, u64, usize)> = config
        .shots_grid
        .iter()
        .enumerate()
        .flat_map(|(i, &m)| (0..config.repeats).map(move |r| (i, m, r)))
        .collect();

    let per_task: Vec<Vec<Vec<String>>> = with_pool(config.workers, || {
        tasks
            .par_iter()
            .map(|&(i, shots, repeat)| {
                let shot_seed = derive_seed(shot_stream, (i * config.repeats + repeat) as u64);
                let mut cache: Vec<(usize, Vec<ShadowBatch>)> = Vec::new();
                let mut rows = Vec::new();
                for (est, &exact_value) in estimators.iter().zip(&exact) {
                    let count = est.batches();
                    if !cache.iter().any(|(c, _)| *c == count) {
                        cache.push((count, batches_for(&rho, shots, count, shot_seed, config.noiseless)?));
                    }
                    let batches = &cache.iter().find(|(c, _)| *c == count).expect("cached").1;
                    let out = estimate(batches, &h, *est)?;
                    let (name, order) = est.label();
                    rows.push(cells![
                        shots,
                        repeat,
                        name,
                        order,
                        count,
                        out.value,
                        exact_value,
                        qfi,
                        (out.value - qfi) / qfi,
                        (out.value - exact_value) / exact_value,
                        solve_label(out.solve),
                        out.status,
                        shot_seed,
                    ]);
                }
                Ok(rows)
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut out = Table::new(config);
    per_task.into_iter().flatten().for_each(|r| out.push(r));
    Ok(out.finish(0))
}

/// Estimated Krylov bounds against the exact QFI over many drawn states.
pub fn run_exact_match_scatter(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    expect_kind(config, ExperimentKind::ExactMatchScatter)?;
    struct Point {
        rows: Vec<Vec<String>>,
        devs: Vec<f64>,
    }
    let points: Vec<Option<Point>> = with_pool(config.workers, || {
        (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = derive_seed(config.seed, t as u64);
                let (rho, h, table) = draw(config, seed, None)?;
                let qfi = crate::exact::qfi_exact(&table);
                if !(qfi > crate::bounds::GAP_TOL) {
                    return Ok(None);
                }
                let mut rows = Vec::new();
                let mut devs = Vec::new();
                for (i, &shots) in config.shots_grid.iter().enumerate() {
                    let shot_seed = derive_seed(seed, 1 + i as u64);
                    for &n in &config.orders {
                        let batches = batches_for(&rho, shots, 2 * n + 1, shot_seed, config.noiseless)?;
                        let out = estimate(&batches, &h, Estimator::Krylov(n))?;
                        let dev = (out.value - qfi) / qfi;
                        devs.push(dev);
                        rows.push(cells![
                            t,
                            shots,
                            n,
                            out.value,
                            qfi,
                            dev,
                            dev.abs() <= SCATTER_TOLERANCE,
                            solve_label(out.solve),
                            out.status,
                            seed,
                        ]);
                    }
                }
                Ok(Some(Point { rows, devs }))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut out = Table::new(config);
    let mut all_devs = Vec::new();
    let mut skipped = 0;
    for p in points {
        match p {
            Some(p) => {
                all_devs.extend(p.devs);
                p.rows.into_iter().for_each(|r| out.push(r));
            }
            None => skipped += 1,
        }
    }
    // Summary: rel_dev holds the largest |deviation|, within_tolerance the fraction inside it.
    let max_dev = all_devs.iter().fold(0.0f64, |m, d| if d.is_nan() { f64::NAN } else { m.max(d.abs()) });
    let inside = all_devs.iter().filter(|d| d.abs() <= SCATTER_TOLERANCE).count();
    let fraction = if all_devs.is_empty() { f64::NAN } else { inside as f64 / all_devs.len() as f64 };
    out.push(cells!["summary", "", "", "", "", max_dev, fraction, "", "", ""]);
    Ok(out.finish(skipped))
}

/// Detection counts `#{B > N}` over noisy states per noise strength, and the
/// ratio to `#{F_Q > N}`.
pub fn run_detect(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    expect_kind(config, ExperimentKind::Detect)?;
    let threshold = config.num_qubits as f64;
    let max_k = max_order(config);
    let mut out = Table::new(config);
    for (ei, &eps) in config.epsilon_grid.iter().enumerate() {
        let stream = derive_seed(config.seed, ei as u64);
        // Per state: [F_Q, Krylov orders..., Taylor orders...]
        let values: Vec<Vec<f64>> = with_pool(config.workers, || {
            (0..config.trials)
                .into_par_iter()
                .map(|t| {
                    let (rho, _, table) = draw(config, derive_seed(stream, t as u64), Some(eps))?;
                    let ladder = krylov_ladder(&table, rho.spectrum(), max_k);
                    let mut v = vec![ladder.qfi];
                    v.extend(config.orders.iter().map(|&n| ladder.bound(n)));
                    v.extend(config.taylor_orders.iter().map(|&n| taylor_bound(&table, n).value));
                    Ok(v)
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let count = |j: usize| values.iter().filter(|v| v[j] > threshold).count();
        let qfi_detected = count(0);
        let ratio = |detected: usize| {
            if qfi_detected == 0 {
                "undefined".to_string()
            } else {
                (detected as f64 / qfi_detected as f64).to_string()
            }
        };
        let labels = std::iter::once(("qfi", 0))
            .chain(config.orders.iter().map(|&n| ("krylov", n)))
            .chain(config.taylor_orders.iter().map(|&n| ("taylor", n)));
        for (j, (name, order)) in labels.enumerate() {
            let detected = count(j);
            out.push(cells![eps, name, order, detected, qfi_detected, ratio(detected), config.trials]);
        }
    }
    Ok(out.finish(0))
}

/// Paths of the files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub manifest: PathBuf,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    config_hash: &'a str,
    versions: Versions,
    rows: usize,
    skipped: usize,
    wall_time: f64,
}

#[derive(Serialize)]
struct Versions {
    #[serde(rename = "krylov-qfi")]
    crate_version: &'static str,
    csv_schema: u32,
}

/// Write `<experiment>.csv` and `<experiment>.manifest.json` into `dir`.
pub fn write_outputs(output: &ExperimentOutput, config: &ExperimentConfig, dir: &Path, wall_time: f64) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let name = output.experiment.name();
    let csv = dir.join(format!("{name}.csv"));
    fs::write(&csv, output.to_csv())?;
    let manifest = dir.join(format!("{name}.manifest.json"));
    let doc = Manifest {
        config,
        config_hash: &output.config_hash,
        versions: Versions {
            crate_version: env!("CARGO_PKG_VERSION"),
            csv_schema: 1,
        },
        rows: output.rows.len(),
        skipped: output.skipped,
        wall_time,
    };
    fs::write(&manifest, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(OutputFiles { csv, manifest })
}

/// Run an experiment and write its outputs to `dir`.
pub fn run_and_write(config: &ExperimentConfig, dir: &Path) -> Result<(ExperimentOutput, OutputFiles)> {
    let start = Instant::now();
    let output = run_experiment(config)?;
    let files = write_outputs(&output, config, dir, start.elapsed().as_secs_f64())?;
    Ok((output, files))
}
