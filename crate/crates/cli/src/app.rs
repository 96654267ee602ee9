use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::{bench, BenchSettings};
use crate::config::{emit, experiment, experiment_only, layer_spec, read_json, split_experiment};
use crate::error::{CliError, CliResult};
use crate::fourier::{fit_fourier, FourierSettings, FourierTarget};
use crate::gram::{kernel_from_config, kernel_gram, GramSettings};
use crate::moons::{classify_moons, MoonsSettings};
use crate::simulate::{simulate, SimulateSettings};
use crate::verify::{verify, VerifySettings};
use crate::Format;

#[derive(Debug, Parser)]
#[command(
    name = "photonic",
    version,
    about = "Linear-optical circuit simulation experiments"
)]
pub struct Cli {
    /// JSON config: a layer or kernel spec plus an optional "experiment" section.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,

    /// Worker threads for batch parallelism (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Write the primary result here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a layer on the config's input rows.
    Simulate,
    /// Compare the simulator against the permanent oracle on Haar-random unitaries.
    Verify {
        #[arg(long)]
        max_m: Option<usize>,
        #[arg(long)]
        max_n: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Fault injection: offset added to the simulator's unitary.
        #[arg(long, hide = true)]
        perturb: Option<f64>,
    },
    /// Fit a Fourier series with the three-mode sandwich circuit.
    FitFourier {
        #[arg(long)]
        photons: Option<usize>,
        /// JSON file with "constant", "cos" and "sin" coefficients.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Train the three-mode classifier on the two-moons dataset.
    ClassifyMoons {
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        /// Where to write the decision-boundary grid CSV.
        #[arg(long)]
        grid_out: Option<PathBuf>,
    },
    /// Time graph construction and repeated forward passes.
    Bench {
        #[arg(long)]
        modes: Option<usize>,
        #[arg(long)]
        photons: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Fidelity-kernel Gram matrix for the config's circuit.
    KernelGram {
        #[arg(long)]
        count: Option<usize>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require_config(path: Option<&Path>, command: &str) -> CliResult<PathBuf> {
    path.map(Path::to_path_buf)
        .ok_or_else(|| CliError::Usage(format!("{command} needs --config")))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // Only fails if a pool already exists, which is harmless here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let out = cli.out.as_deref();
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate => {
            let path = require_config(config, "simulate")?;
            let (rest, section) = split_experiment(read_json(&path)?)?;
            let spec = layer_spec(rest)?;
            let settings: SimulateSettings = experiment(section)?;
            let report = simulate(spec, &settings, cli.seed)?;
            emit(out, &report.render(cli.format.unwrap_or(Format::Json)))
        }
        Command::Verify {
            max_m,
            max_n,
            trials,
            perturb,
        } => {
            let mut s: VerifySettings = experiment_only(config)?;
            set(&mut s.max_m, max_m);
            set(&mut s.max_n, max_n);
            set(&mut s.trials, trials);
            set(&mut s.perturb, perturb);
            let report = verify(&s, cli.seed)?;
            emit(out, &to_json(&report))?;
            eprintln!(
                "verify: {} cases, max deviation {:e} (tolerance {:e})",
                report.cases, report.max_deviation, report.tolerance
            );
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Verification(format!(
                    "max deviation {:e} exceeds {:e}",
                    report.max_deviation, report.tolerance
                )))
            }
        }
        Command::FitFourier {
            photons,
            target,
            steps,
            lr,
        } => {
            let mut s: FourierSettings = experiment_only(config)?;
            set(&mut s.photons, photons);
            set(&mut s.steps, steps);
            set(&mut s.lr, lr);
            if let Some(path) = target {
                let t: FourierTarget = serde_json::from_value(read_json(&path)?)
                    .map_err(|e| CliError::Config(format!("target: {e}")))?;
                s.target = Some(t);
            }
            let fit = fit_fourier(&s, cli.seed)?;
            eprintln!(
                "fit-fourier: photons={} steps={} final_mse={:e}",
                fit.photons, fit.steps, fit.mse
            );
            emit(out, &fit.render(cli.format.unwrap_or(Format::Csv)))
        }
        Command::ClassifyMoons {
            samples,
            noise,
            epochs,
            lr,
            grid_out,
        } => {
            let mut s: MoonsSettings = experiment_only(config)?;
            set(&mut s.samples, samples);
            set(&mut s.noise, noise);
            set(&mut s.epochs, epochs);
            set(&mut s.lr, lr);
            let report = classify_moons(&s, cli.seed)?;
            eprintln!(
                "classify-moons: train accuracy {:.4}, test accuracy {:.4}",
                report.train_accuracy, report.test_accuracy
            );
            if let Some(p) = grid_out {
                std::fs::write(p, report.grid_csv())?;
            }
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => emit(out, &report.metrics_json()),
                Format::Csv => emit(out, &report.grid_csv()),
            }
        }
        Command::Bench {
            modes,
            photons,
            batch,
            repeats,
        } => {
            let mut s: BenchSettings = experiment_only(config)?;
            set(&mut s.modes, modes);
            set(&mut s.photons, photons);
            set(&mut s.batch, batch);
            set(&mut s.repeats, repeats);
            let report = bench(&s, cli.seed)?;
            emit(out, &to_json(&report))
        }
        Command::KernelGram { count } => {
            let path = require_config(config, "kernel-gram")?;
            let (rest, section) = split_experiment(read_json(&path)?)?;
            let spec = kernel_from_config(rest)?;
            let mut s: GramSettings = experiment(section)?;
            set(&mut s.count, count);
            let report = kernel_gram(spec, &s, cli.seed)?;
            emit(out, &report.render(cli.format.unwrap_or(Format::Csv)))
        }
    }
}
