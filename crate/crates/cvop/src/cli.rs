//! Command-line interface: training, frontier evaluation and export,
//! baselines, gradient checks, and returns ingestion.
//!
//! Exit codes: 0 on success, 1 on usage/configuration errors, 2 on numerical
//! failures (divergence, infeasible or unbounded linear programs,
//! non-convergent inner minimizations).

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::frontier::{
    baseline_random, evaluate_frontier, realized_epsilon_2d, FrontierError, InnerApproximation,
    OuterApproximation, TrainedNetworks,
};
use crate::io::{
    export_frontier_csv, export_loss_history_csv, load_checkpoint, load_config,
    load_problem_json, resolve_config, resolve_test_weights, save_checkpoint, write_problem_json,
    ArchConfig, Checkpoint, Config, IoError, TerminalConfig, TestSection, TrainSection,
    CHECKPOINT_FORMAT_VERSION,
};
use crate::linalg::LinAlgError;
use crate::problem::{builtins, ProblemDescriptor, ProblemError, ProblemSpec};
use crate::training::{train, EtaSetting, LossKind, SamplingMode, TrainError};

#[derive(Parser)]
#[command(
    name = "cvop",
    about = "Neural inner/outer approximation of weakly efficient frontiers of convex vector optimization problems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List the built-in problems with their dimensions.
    ListProblems,
    /// Train the primal/dual networks and write a checkpoint plus a
    /// loss-history CSV.
    Train {
        /// Configuration file (JSON).
        #[arg(long, conflicts_with = "preset")]
        config: Option<PathBuf>,
        /// Experiment preset: s5.1, s5.2, s5.3, s5.4, or s6.1.
        #[arg(long)]
        preset: Option<String>,
        /// Objective count for the presets that sweep dimensions (s5.2, s5.3).
        #[arg(long)]
        objectives: Option<usize>,
        /// Problem JSON for data-driven presets (s5.4).
        #[arg(long)]
        problem_file: Option<PathBuf>,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Loss-history CSV path (default: <out>.loss.csv).
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Evaluate a trained checkpoint over test scalarizations and export the
    /// frontier table.
    Frontier {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Regular grid size (P = 2 only).
        #[arg(long, conflicts_with_all = ["weights", "samples"])]
        grid: Option<usize>,
        /// Uniform sample count for P > 2.
        #[arg(long, conflicts_with = "weights")]
        samples: Option<usize>,
        /// Seed for --samples.
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        /// Explicit weights file (JSON array of arrays).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Output CSV path.
        #[arg(long)]
        csv: PathBuf,
        /// Also compute the realized (support-function) errors; P = 2 only.
        #[arg(long)]
        realized: bool,
        /// Worker threads (default: CVOP_THREADS or machine parallelism).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Random-feasible-point baseline errors over the config's test weights.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Finite-difference verification of derivatives on a built-in problem.
    Gradcheck {
        /// One of: box_biobjective, test_instance_4, hyperball,
        /// mean_variance, lvop.
        #[arg(long)]
        problem: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Random configurations per suite.
        #[arg(long, default_value_t = 10)]
        configs: usize,
    },
    /// Build a mean-variance problem JSON from a price history CSV.
    IngestReturns {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("error[usage]: {e}");
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("{e}");
            code
        }
    }
}

/// Top-level error with its exit classification. Numerical failures carry
/// exit code 2, everything else 1.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("error[usage]: {0}")]
    Usage(String),
    #[error("error[numeric]: {0}")]
    Numeric(String),
    #[error("error[io]: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

fn classify_train(e: TrainError) -> CliError {
    match &e {
        TrainError::Divergence { .. } => CliError::Numeric(e.to_string()),
        TrainError::Problem(p) => classify_problem_ref(p, e.to_string()),
        TrainError::Network(_) => CliError::Numeric(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn classify_problem_ref(p: &ProblemError, text: String) -> CliError {
    match p {
        ProblemError::DualInfeasible { .. }
        | ProblemError::DualNotConverged { .. }
        | ProblemError::Linalg(LinAlgError::LpInfeasible { .. })
        | ProblemError::Linalg(LinAlgError::LpUnbounded)
        | ProblemError::Linalg(LinAlgError::IterationLimit) => CliError::Numeric(text),
        _ => CliError::Usage(text),
    }
}

fn classify_frontier(e: FrontierError) -> CliError {
    match &e {
        FrontierError::UnboundedOuter => CliError::Numeric(e.to_string()),
        FrontierError::Problem(p) => classify_problem_ref(p, e.to_string()),
        FrontierError::Network(_) | FrontierError::Linalg(_) => CliError::Numeric(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn classify_io(e: IoError) -> CliError {
    match &e {
        IoError::Train(t) => match t {
            TrainError::Divergence { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        },
        IoError::Problem(p) => classify_problem_ref(p, e.to_string()),
        IoError::File { .. } | IoError::Csv(_) => CliError::Io(e.to_string()),
        _ => CliError::Usage(e.to_string()),
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let count = threads.or_else(|| {
        std::env::var("CVOP_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = count {
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::ListProblems => {
            list_problems();
            Ok(())
        }
        Command::Train {
            config,
            preset,
            objectives,
            problem_file,
            out,
            loss_csv,
        } => run_train(config, preset, objectives, problem_file, out, loss_csv),
        Command::Frontier {
            checkpoint,
            grid,
            samples,
            sample_seed,
            weights,
            csv,
            realized,
            threads,
        } => run_frontier(checkpoint, grid, samples, sample_seed, weights, csv, realized, threads),
        Command::Baseline {
            config,
            csv,
            seed,
            threads,
        } => run_baseline(config, csv, seed, threads),
        Command::Gradcheck {
            problem,
            seed,
            configs,
        } => run_gradcheck_cmd(&problem, seed, configs),
        Command::IngestReturns { prices, out } => run_ingest(prices, out),
    }
}

fn list_problems() {
    println!("box_biobjective(n)     P=2, M=2n  quadratic objectives over the unit box (paper n=40)");
    println!("test_instance_4(p, n)  P=M=p<=n   shifted-sphere objectives with quadratic constraints (paper n=100)");
    println!("hyperball(n, epsilon)  P=n, M=1   coordinate squares over a shifted unit ball (epsilon=0.01)");
    println!("mean_variance(data)    P=2, M=S   portfolio return/variance tradeoff from ingested returns");
    println!("lvop(C, A, b)          linear objectives over a polytope (benchmark: P=2, n=2, M=5)");
}

fn resolve_input_config(
    config: Option<PathBuf>,
    preset: Option<String>,
    objectives: Option<usize>,
    problem_file: Option<&Path>,
) -> Result<Config, CliError> {
    match (config, preset) {
        (Some(path), None) => load_config(&path).map_err(classify_io),
        (None, Some(name)) => preset_config(&name, objectives, problem_file),
        (None, None) => Err(CliError::Usage(
            "train needs either --config or --preset".into(),
        )),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    }
}

/// The experiment presets reproduce the benchmark setups in one command:
/// architectures, terminals, training weights, epoch counts, and loss
/// weighting all preconfigured.
fn preset_config(
    name: &str,
    objectives: Option<usize>,
    problem_file: Option<&Path>,
) -> Result<Config, CliError> {
    let arch = |widths: &[usize], terminal: TerminalConfig| ArchConfig {
        hidden_widths: widths.to_vec(),
        terminal,
        outputs: None,
    };
    let train = |epochs: usize, eta: EtaSetting, k: usize, sampling: SamplingMode| TrainSection {
        epochs,
        learning_rate: 1e-4,
        eta,
        delta: None,
        cs_tolerance: 5e-5,
        k,
        sampling,
        seed: 0,
        loss_kind: LossKind::Kkt,
    };
    let projection = TerminalConfig::Projection {
        tol: 5e-5,
        pre_relu: false,
    };
    match name {
        "s5.1" => Ok(Config {
            problem: ProblemDescriptor::BoxBiobjective { n: 40 },
            primal_arch: arch(&[800, 800, 800], projection),
            dual_arch: arch(&[1600, 1600, 1600], TerminalConfig::Relu),
            train: TrainSection {
                eta: EtaSetting::Fixed(10.0),
                ..train(1000, EtaSetting::Fixed(10.0), 4, SamplingMode::Grid)
            },
            test: Some(TestSection {
                grid_size: Some(1001),
                samples: None,
                seed: 0,
                weights_file: None,
            }),
        }),
        "s5.2" => {
            let p = objectives.unwrap_or(5);
            Ok(Config {
                problem: ProblemDescriptor::TestInstance4 { p, n: 100 },
                primal_arch: ArchConfig {
                    hidden_widths: vec![500, 500],
                    terminal: projection,
                    // P+1 outputs; the last one drives the symmetric tail.
                    outputs: Some(p + 1),
                },
                dual_arch: arch(&[500, 500], TerminalConfig::Relu),
                train: train(200, EtaSetting::Fixed(10.0), 50, SamplingMode::Uniform),
                test: Some(TestSection {
                    grid_size: None,
                    samples: Some(5000),
                    seed: 0,
                    weights_file: None,
                }),
            })
        }
        "s5.3" => {
            let n = objectives.unwrap_or(5);
            Ok(Config {
                problem: ProblemDescriptor::Hyperball {
                    n,
                    epsilon: 0.01,
                    centered: true,
                },
                primal_arch: arch(&[300, 300], projection),
                dual_arch: arch(&[300, 300], TerminalConfig::Softplus),
                train: train(2500, EtaSetting::Fixed(10.0), 50, SamplingMode::Uniform),
                test: Some(TestSection {
                    grid_size: None,
                    samples: Some(5000),
                    seed: 0,
                    weights_file: None,
                }),
            })
        }
        "s5.4" => {
            let path = problem_file.ok_or_else(|| {
                CliError::Usage(
                    "preset s5.4 needs --problem-file (from `cvop ingest-returns`)".into(),
                )
            })?;
            let descriptor = load_problem_json(path).map_err(classify_io)?;
            if !matches!(descriptor, ProblemDescriptor::MeanVariance { .. }) {
                return Err(CliError::Usage(
                    "preset s5.4 expects a mean_variance problem file".into(),
                ));
            }
            Ok(Config {
                problem: descriptor,
                primal_arch: arch(
                    &[800, 800, 800],
                    TerminalConfig::Projection {
                        tol: 5e-5,
                        pre_relu: true,
                    },
                ),
                dual_arch: arch(&[800, 800, 800], TerminalConfig::Softplus),
                train: train(5000, EtaSetting::Fixed(10.0), 5, SamplingMode::Grid),
                test: Some(TestSection {
                    grid_size: Some(1001),
                    samples: None,
                    seed: 0,
                    weights_file: None,
                }),
            })
        }
        "s6.1" => Ok(Config {
            problem: builtins::lvop_benchmark_descriptor(),
            primal_arch: arch(&[800, 800, 800], projection),
            dual_arch: arch(&[800, 800, 800], TerminalConfig::DualNullspace { margin: 5e-3 }),
            train: train(500, EtaSetting::Fixed(1e-4), 20, SamplingMode::Grid),
            test: Some(TestSection {
                grid_size: Some(501),
                samples: None,
                seed: 0,
                weights_file: None,
            }),
        }),
        other => Err(CliError::Usage(format!(
            "unknown preset {other:?}; available: s5.1, s5.2, s5.3, s5.4, s6.1"
        ))),
    }
}

fn run_train(
    config: Option<PathBuf>,
    preset: Option<String>,
    objectives: Option<usize>,
    problem_file: Option<PathBuf>,
    out: PathBuf,
    loss_csv: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = resolve_input_config(config, preset, objectives, problem_file.as_deref())?;
    let setup = resolve_config(&config).map_err(classify_io)?;
    let output = train(
        &setup.problem,
        &setup.primal_arch,
        &setup.dual_arch,
        &setup.train,
    )
    .map_err(classify_train)?;

    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_FORMAT_VERSION,
        problem: config.problem.clone(),
        primal_arch: setup.primal_arch.clone(),
        dual_arch: setup.dual_arch.clone(),
        primal_params: output.primal_params,
        dual_params: output.dual_params,
        train: setup.train.clone(),
        epochs_trained: setup.train.epochs,
        final_loss: output.history.last().copied(),
        eta: output.eta,
        seed: setup.train.seed,
    };
    save_checkpoint(&out, &checkpoint).map_err(classify_io)?;
    let loss_path = loss_csv.unwrap_or_else(|| derive_loss_path(&out));
    export_loss_history_csv(&loss_path, &output.history).map_err(classify_io)?;

    println!(
        "trained {} for {} epochs (eta = {:.6e})",
        setup.problem.name(),
        setup.train.epochs,
        output.eta
    );
    if let Some(last) = output.history.last() {
        println!(
            "final loss: total {:.6e} (stationarity {:.6e}, slackness {:.6e})",
            last.total, last.stationarity, last.complementary_slackness
        );
    }
    println!("checkpoint: {}", out.display());
    println!("loss history: {}", loss_path.display());
    Ok(())
}

fn derive_loss_path(out: &Path) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".loss.csv");
    PathBuf::from(os)
}

#[allow(clippy::too_many_arguments)]
fn run_frontier(
    checkpoint_path: PathBuf,
    grid: Option<usize>,
    samples: Option<usize>,
    sample_seed: u64,
    weights: Option<PathBuf>,
    csv: PathBuf,
    realized: bool,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&checkpoint_path).map_err(classify_io)?;
    let problem = checkpoint.problem.build().map_err(|e| classify_problem_ref(&e, e.to_string()))?;
    let test = TestSection {
        grid_size: grid,
        samples,
        seed: sample_seed,
        weights_file: weights,
    };
    if [test.grid_size.is_some(), test.samples.is_some(), test.weights_file.is_some()]
        .iter()
        .filter(|b| **b)
        .count()
        != 1
    {
        return Err(CliError::Usage(
            "set exactly one of --grid, --samples, --weights".into(),
        ));
    }
    if test.grid_size.is_some() && problem.objective_dim() != 2 {
        return Err(CliError::Usage(format!(
            "--grid is only defined for P = 2; use --samples for P = {}",
            problem.objective_dim()
        )));
    }
    let test_ws = resolve_test_weights(&test, &problem).map_err(classify_io)?;
    let pool = thread_pool(threads)?;
    let nets = TrainedNetworks {
        primal_arch: &checkpoint.primal_arch,
        primal_params: &checkpoint.primal_params,
        dual_arch: &checkpoint.dual_arch,
        dual_params: &checkpoint.dual_params,
    };
    let points = pool
        .install(|| evaluate_frontier(&problem, &nets, &test_ws))
        .map_err(classify_frontier)?;

    let realized_values = if realized {
        if problem.objective_dim() != 2 {
            return Err(CliError::Usage(
                "--realized is only defined for bi-objective problems".into(),
            ));
        }
        let inner = InnerApproximation::from_frontier(&points);
        let outer = OuterApproximation::from_frontier(&points);
        let values: Result<Vec<f64>, FrontierError> = pool.install(|| {
            use rayon::prelude::*;
            test_ws
                .par_iter()
                .map(|w| realized_epsilon_2d(&inner, &outer, w))
                .collect()
        });
        Some(values.map_err(classify_frontier)?)
    } else {
        None
    };

    export_frontier_csv(&csv, &points, realized_values.as_deref()).map_err(classify_io)?;
    println!(
        "evaluated {} scalarizations on {}; wrote {}",
        points.len(),
        problem.name(),
        csv.display()
    );
    Ok(())
}

fn run_baseline(
    config_path: PathBuf,
    csv: PathBuf,
    seed: u64,
    threads: Option<usize>,
) -> Result<(), CliError> {
    let config = load_config(&config_path).map_err(classify_io)?;
    let setup = resolve_config(&config).map_err(classify_io)?;
    let test = setup.test.as_ref().ok_or_else(|| {
        CliError::Usage("baseline needs a test section in the config".into())
    })?;
    let test_ws = resolve_test_weights(test, &setup.problem).map_err(classify_io)?;
    let pool = thread_pool(threads)?;
    let eps = pool
        .install(|| baseline_random(&setup.problem, seed, &test_ws))
        .map_err(classify_frontier)?;

    let mut out = String::new();
    let p = setup.problem.objective_dim();
    for i in 1..=p {
        out.push_str(&format!("w_{i},"));
    }
    out.push_str("epsilon\n");
    for (w, e) in test_ws.iter().zip(&eps) {
        for v in w.values() {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&format!("{e:.16e}\n"));
    }
    std::fs::write(&csv, out).map_err(|e| CliError::Io(format!("{}: {e}", csv.display())))?;
    println!(
        "baseline over {} scalarizations on {}; wrote {}",
        eps.len(),
        setup.problem.name(),
        csv.display()
    );
    Ok(())
}

fn gradcheck_problem(name: &str) -> Result<ProblemSpec, CliError> {
    let spec = match name {
        "box_biobjective" => builtins::box_biobjective(40),
        "test_instance_4" => builtins::test_instance_4(5, 20),
        "hyperball" => builtins::hyperball(5, 0.01).map(|p| p.centered()),
        "mean_variance" => builtins::mean_variance_demo_descriptor().build(),
        "lvop" => builtins::lvop_benchmark_descriptor().build(),
        other => {
            return Err(CliError::Usage(format!(
                "unknown problem {other:?}; see `cvop list-problems`"
            )))
        }
    };
    spec.map_err(|e| CliError::Usage(e.to_string()))
}

fn run_gradcheck_cmd(problem_name: &str, seed: u64, configs: usize) -> Result<(), CliError> {
    let problem = gradcheck_problem(problem_name)?;
    let report = crate::diagnostics::run_gradcheck(&problem, seed, configs)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    println!("gradcheck on {} ({configs} configurations per suite)", problem.name());
    println!("  jacobians vs central differences:     {:.3e}", report.jacobian_max_rel);
    println!("  hessian-vector products:              {:.3e}", report.hvp_max_rel);
    println!("  network parameter gradients:          {:.3e}", report.vjp_max_rel);
    println!("  assembled loss gradient:              {:.3e}", report.loss_grad_max_rel);
    println!("  max relative error:                   {:.3e}", report.overall());
    if report.overall() <= 1e-5 {
        Ok(())
    } else {
        Err(CliError::Numeric(format!(
            "gradcheck max relative error {:.3e} exceeds 1e-5",
            report.overall()
        )))
    }
}

fn run_ingest(prices: PathBuf, out: PathBuf) -> Result<(), CliError> {
    let dataset = crate::io::ingest_returns(&prices).map_err(classify_io)?;
    for name in &dataset.dropped {
        eprintln!("warning: dropped asset {name:?} (missing values)");
    }
    let descriptor = dataset.to_problem_descriptor();
    write_problem_json(&out, &descriptor).map_err(classify_io)?;
    println!(
        "ingested {} assets over {} return observations; wrote {}",
        dataset.assets.len(),
        dataset.log_returns.rows(),
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_materialize() {
        for name in ["s5.1", "s5.2", "s5.3", "s6.1"] {
            let config = preset_config(name, None, None).unwrap();
            let setup = resolve_config(&config).unwrap();
            assert!(setup.train.epochs > 0, "{name}");
        }
        assert!(preset_config("s9.9", None, None).is_err());
        // s5.4 requires a problem file.
        assert!(preset_config("s5.4", None, None).is_err());
    }

    #[test]
    fn preset_s52_uses_tail_replication() {
        let config = preset_config("s5.2", Some(3), None).unwrap();
        let setup = resolve_config(&config).unwrap();
        assert_eq!(setup.primal_arch.raw_output_dim(), 4);
        let map = setup.primal_arch.output_replication.as_ref().unwrap();
        assert_eq!(map.len(), 100);
        assert_eq!(&map[..4], &[0, 1, 2, 3]);
        assert!(map[4..].iter().all(|&i| i == 3));
    }

    #[test]
    fn preset_s61_delta_and_eta() {
        let config = preset_config("s6.1", None, None).unwrap();
        let setup = resolve_config(&config).unwrap();
        assert_eq!(setup.train.delta, 1e-4);
        assert_eq!(setup.train.eta, EtaSetting::Fixed(1e-4));
        assert_eq!(setup.train.k, 20);
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["cvop", "no-such-command"]), 1);
        assert_eq!(run(["cvop", "train", "--out", "/tmp/x.json"]), 1);
        assert_eq!(run(["cvop", "gradcheck", "--problem", "nope"]), 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["cvop", "--help"]), 0);
    }
}
