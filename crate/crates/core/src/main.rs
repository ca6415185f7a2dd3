use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use krylov_qfi::bounds::bounds_report;
use krylov_qfi::ensembles::{EnsembleKind, EnsembleSpec, NoiseKind};
use krylov_qfi::exact::{n_star, DEFAULT_GROUP_TOL};
use krylov_qfi::experiments::{run_and_write, ConfigPatch, ExperimentConfig, ExperimentKind};
use krylov_qfi::io::{load_counts, load_observable, load_state, save_counts};
use krylov_qfi::qcore::{collective_z, DensityMatrix, Observable, TransitionTable};
use krylov_qfi::shadows::{estimate_krylov, estimate_taylor, sample_shadows};
use krylov_qfi::{Error, Result};

/// Lower bounds on the quantum Fisher information, exact and from simulated classical shadows.
#[derive(Parser)]
#[command(name = "krylov-qfi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// QFI, Krylov and Taylor bounds, condition number and envelope for one state.
    Bounds {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = 8)]
        max_order: usize,
        #[arg(long, default_value_t = 7)]
        taylor_max: usize,
        /// JSON output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Krylov termination order n* with its |S| and |J| breakdown.
    Nstar {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long, default_value_t = DEFAULT_GROUP_TOL)]
        group_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Relative Krylov gaps against the convergence envelope over random full-rank states.
    GapScan(ExperimentArgs),
    /// Krylov gap of order n against the Taylor gap of order 2n-1.
    CompareTaylor(ExperimentArgs),
    /// Shadow estimates across shot counts; with --counts, estimate from a saved dataset instead.
    ShadowEstimate {
        #[command(flatten)]
        experiment: ExperimentArgs,
        /// Shadow-count file written by sample-shadows.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Estimator used with --counts: krylov or taylor.
        #[arg(long, default_value = "krylov")]
        estimator: String,
        /// Order used with --counts.
        #[arg(long, default_value_t = 1)]
        order: usize,
        /// Observable file used with --counts; defaults to the collective Z spin.
        #[arg(long)]
        observable: Option<PathBuf>,
    },
    /// Estimated Krylov bound against the exact QFI for many random states.
    ExactMatchScatter(ExperimentArgs),
    /// Entanglement detection rates of each bound over noisy pure states.
    Detect(ExperimentArgs),
    /// Simulate randomized-Pauli shadows of a state and save the counts.
    SampleShadows {
        #[command(flatten)]
        state: StateArgs,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        batches: usize,
        /// Output file; a .bin extension selects the binary form.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Where the state comes from: a matrix file, or a seeded ensemble draw.
#[derive(Args)]
struct StateArgs {
    /// Density-matrix file (text, .bin or .json).
    #[arg(long)]
    state: Option<PathBuf>,
    /// Observable file; defaults to the collective Z spin of the register.
    #[arg(long)]
    observable: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    qubits: usize,
    #[arg(long, value_parser = parse_enum::<EnsembleKind>, default_value = "fullrank_hs")]
    ensemble: EnsembleKind,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_parser = parse_enum::<NoiseKind>, default_value = "random_fullrank")]
    noise_kind: NoiseKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    qubits: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    taylor_orders: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    shots: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long, value_parser = parse_enum::<EnsembleKind>)]
    ensemble: Option<EnsembleKind>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, value_parser = parse_enum::<NoiseKind>)]
    noise_kind: Option<NoiseKind>,
    #[arg(long)]
    repeats: Option<usize>,
    /// Feed estimators the exact state instead of sampled shadows.
    #[arg(long)]
    noiseless: bool,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

impl StateArgs {
    fn load(&self) -> Result<(DensityMatrix, Observable)> {
        let rho = match &self.state {
            Some(path) => load_state(path)?,
            None => EnsembleSpec {
                kind: self.ensemble,
                dim: krylov_qfi::qcore::qubit_dim(self.qubits, krylov_qfi::qcore::DEFAULT_MAX_QUBITS)?,
                rank: self.rank,
                epsilon: self.epsilon,
                noise_kind: self.noise_kind,
                seed: self.seed,
            }
            .sample()?,
        };
        let h = match &self.observable {
            Some(path) => load_observable(path)?,
            None => default_observable(rho.dim())?,
        };
        Ok((rho, h))
    }
}

fn default_observable(dim: usize) -> Result<Observable> {
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} is not a qubit register; pass --observable"
        )));
    }
    collective_z(dim.trailing_zeros() as usize)
}

impl ExperimentArgs {
    fn resolve(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ConfigPatch::from_toml(&std::fs::read_to_string(path)?)?,
            None => ConfigPatch::default(),
        };
        let flags = ConfigPatch {
            experiment: None,
            num_qubits: self.qubits,
            trials: self.trials,
            orders: self.orders.clone(),
            taylor_orders: self.taylor_orders.clone(),
            shots_grid: self.shots.clone(),
            epsilon_grid: self.epsilon.clone(),
            ensemble: self.ensemble,
            rank: self.rank,
            noise_kind: self.noise_kind,
            seed: self.seed,
            repeats: self.repeats,
            noiseless: self.noiseless.then_some(true),
            workers: self.workers,
            out_path: self.out.as_ref().map(|p| p.display().to_string()),
        };
        base.merge(flags).resolve(Some(kind))
    }

    fn run(&self, kind: ExperimentKind) -> Result<()> {
        let config = self.resolve(kind)?;
        let dir = PathBuf::from(config.out_path.clone().unwrap_or_else(|| "results".into()));
        let (output, files) = run_and_write(&config, &dir)?;
        println!(
            "{}: {} rows ({} skipped) -> {}, {}",
            kind.name(),
            output.rows.len(),
            output.skipped,
            files.csv.display(),
            files.manifest.display()
        );
        Ok(())
    }
}

fn emit_json<T: serde::Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bounds {
            state,
            max_order,
            taylor_max,
            out,
        } => {
            let (rho, h) = state.load()?;
            emit_json(&bounds_report(&rho, &h, max_order, taylor_max)?, out.as_ref())
        }
        Command::Nstar { state, group_tol, out } => {
            let (rho, h) = state.load()?;
            let table = TransitionTable::from_state(&rho, &h)?;
            emit_json(&n_star(&table, rho.spectrum(), group_tol), out.as_ref())
        }
        Command::GapScan(args) => args.run(ExperimentKind::GapScan),
        Command::CompareTaylor(args) => args.run(ExperimentKind::CompareTaylor),
        Command::ShadowEstimate {
            experiment,
            counts: Some(path),
            estimator,
            order,
            observable,
        } => {
            let counts = load_counts(&path)?;
            let h = match observable {
                Some(p) => load_observable(&p)?,
                None => default_observable(1 << counts.num_qubits)?,
            };
            let record = match estimator.as_str() {
                "krylov" => estimate_krylov(&counts, &h, order)?,
                "taylor" => estimate_taylor(&counts, &h, order)?,
                other => return Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
            };
            emit_json(&record, experiment.out.as_ref())
        }
        Command::ShadowEstimate { experiment, .. } => experiment.run(ExperimentKind::ShadowEstimate),
        Command::ExactMatchScatter(args) => args.run(ExperimentKind::ExactMatchScatter),
        Command::Detect(args) => args.run(ExperimentKind::Detect),
        Command::SampleShadows {
            state,
            shots,
            batches,
            out,
        } => {
            let (rho, _) = state.load()?;
            let counts = sample_shadows(&rho, shots, batches, state.seed)?;
            save_counts(&out, &counts)?;
            println!("{shots} shadows in {batches} batches -> {}", out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
