//! Command-line tools for low-rank Tucker tensor estimation: synthetic
//! ground truths, Bernoulli sampling, completion/regression/factorization
//! solvers, a restricted-isometry probe, and the experiment harness.
//!
//! Exit codes: 0 success, 1 solver divergence, 2 input or contract error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scaledgd::completion::{CompletionInit, PMode};
use scaledgd::experiments::{
    run_convergence, run_kappa_sweep, run_phase_transition, write_convergence_csv,
    write_kappa_csv, write_phase_csv, write_summary_json, ExperimentConfig, ExperimentKind,
};
use scaledgd::{
    io, make_ground_truth, observe, sample_mask, solve_completion, solve_completion_gd,
    solve_factorization, solve_regression, solve_regression_gd, trip_probe, CompletionParams,
    Error, GaussianDesign, RegressionInit, SolverParams, StopReason, Trajectory, TruthInfo,
    TruthStyle,
};

#[derive(Parser)]
#[command(
    name = "scaledgd",
    version,
    about = "Low-rank Tucker tensor estimation via scaled gradient descent"
)]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Force serial reductions (single thread).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AlgArg {
    Scaledgd,
    Gd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitArg {
    Spectral,
    Random,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PModeArg {
    Given,
    Estimated,
}

/// Dims or ranks: one integer for a cube, or `a,b,c`.
fn parse_triple(s: &str) -> Result<(usize, usize, usize), String> {
    let parts: Vec<&str> = s.split(',').collect();
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
    match parts.len() {
        1 => {
            let n = parse(parts[0])?;
            Ok((n, n, n))
        }
        3 => Ok((parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)),
        _ => Err("expected N or N1,N2,N3".into()),
    }
}

/// Ground-truth style: `gaussian` or `kappa:K`.
fn parse_style(s: &str) -> Result<TruthStyle, String> {
    if s == "gaussian" {
        return Ok(TruthStyle::GaussianCore);
    }
    if let Some(k) = s.strip_prefix("kappa:") {
        let kappa = k.parse::<f64>().map_err(|e| e.to_string())?;
        return Ok(TruthStyle::PrescribedKappa(kappa));
    }
    Err("expected `gaussian` or `kappa:K`".into())
}

#[derive(Args)]
struct SolverArgs {
    /// Step size.
    #[arg(long, default_value_t = 0.3)]
    eta: f64,
    /// Maximum iterations.
    #[arg(long, default_value_t = 150)]
    iters: usize,
    /// Stop at this relative error (0 disables early stopping).
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Record every k-th iteration in the trajectory.
    #[arg(long, default_value_t = 1)]
    record_every: usize,
}

impl SolverArgs {
    fn to_params(&self) -> SolverParams {
        SolverParams {
            eta: self.eta,
            max_iters: self.iters,
            rel_tol: self.tol,
            use_projection: false,
            projection_b: None,
            record_every: self.record_every,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic low-rank ground truth tensor.
    GenTruth {
        /// Dimensions (N or N1,N2,N3).
        #[arg(long, value_parser = parse_triple)]
        n: (usize, usize, usize),
        /// Multilinear rank (R or R1,R2,R3).
        #[arg(long, value_parser = parse_triple)]
        r: (usize, usize, usize),
        /// Core style: `gaussian` or `kappa:K`.
        #[arg(long, value_parser = parse_style, default_value = "gaussian")]
        style: TruthStyle,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output TNS3 file for the dense tensor.
        #[arg(long)]
        out: PathBuf,
        /// Optional TFQ1 file for the factor quadruple.
        #[arg(long)]
        factors_out: Option<PathBuf>,
    },
    /// Sample Bernoulli observations from a dense tensor.
    Sample {
        /// Truth tensor (TNS3).
        #[arg(long)]
        truth: PathBuf,
        /// Observation probability in (0, 1].
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Additive noise level as an SNR in dB.
        #[arg(long)]
        snr_db: Option<f64>,
        /// Additive noise standard deviation (overrides --snr-db).
        #[arg(long)]
        noise_sigma: Option<f64>,
        /// Output OBS1 file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete a partially observed tensor.
    Complete {
        /// Observations (OBS1).
        #[arg(long)]
        obs: PathBuf,
        #[arg(long, value_parser = parse_triple)]
        r: (usize, usize, usize),
        #[arg(long, value_enum, default_value_t = AlgArg::Scaledgd)]
        alg: AlgArg,
        #[arg(long, value_enum, default_value_t = InitArg::Spectral)]
        init: InitArg,
        /// Seed for random initialization.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PModeArg::Given)]
        p_mode: PModeArg,
        /// Enable the scaled projection with this radius.
        #[arg(long)]
        projection_b: Option<f64>,
        /// Ground truth (TNS3) for error tracking; required for --alg gd.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Trajectory CSV output.
        #[arg(long)]
        traj: Option<PathBuf>,
        /// Completed dense tensor output (TNS3).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Final factors output (TFQ1).
        #[arg(long)]
        factors_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Recover a low-rank tensor from Gaussian measurements.
    Regress {
        /// Truth tensor (TNS3); measured when --y is absent.
        #[arg(long)]
        truth: PathBuf,
        /// Number of measurements.
        #[arg(long)]
        m: usize,
        #[arg(long, value_parser = parse_triple)]
        r: (usize, usize, usize),
        /// Design seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = AlgArg::Scaledgd)]
        alg: AlgArg,
        /// Existing measurement vector (YVC1); generated from the truth
        /// when absent.
        #[arg(long)]
        y: Option<PathBuf>,
        /// Write the measurement vector (YVC1).
        #[arg(long)]
        y_out: Option<PathBuf>,
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        factors_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Tucker-factorize a dense tensor by scaled gradient descent from
    /// its HOSVD.
    Factorize {
        /// Target tensor (TNS3).
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_parser = parse_triple)]
        r: (usize, usize, usize),
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        factors_out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Estimate the restricted-isometry constant of a Gaussian design.
    TripProbe {
        #[arg(long)]
        m: usize,
        #[arg(long, value_parser = parse_triple)]
        n: (usize, usize, usize),
        #[arg(long, value_parser = parse_triple)]
        r: (usize, usize, usize),
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Optional JSON report.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run an experiment sweep from a JSON config.
    Experiment {
        /// Config JSON (kind, sizes, seeds, algorithms, ...).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for CSV tables and the summary JSON.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.deterministic {
        Some(1)
    } else {
        cli.threads
    };
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: failed to configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.cmd) {
        Ok(diverged) => {
            if diverged {
                eprintln!("warning: solver diverged");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Environment override for seeds.
fn effective_seed(seed: u64) -> u64 {
    match std::env::var("TUCKER_SEED") {
        Ok(v) => v.parse().unwrap_or(seed),
        Err(_) => seed,
    }
}

fn announce(config: serde_json::Value) {
    eprintln!("config: {config}");
}

fn write_solution_files(
    traj: &Trajectory,
    traj_path: &Option<PathBuf>,
    out: &Option<PathBuf>,
    factors_out: &Option<PathBuf>,
) -> Result<(), Error> {
    if let Some(path) = traj_path {
        io::save_trajectory_csv(path, traj)?;
    }
    if let Some(path) = out {
        io::save_tensor(path, &traj.final_quad.reconstruct()?)?;
    }
    if let Some(path) = factors_out {
        io::save_quad(path, &traj.final_quad)?;
    }
    Ok(())
}

fn report_final(traj: &Trajectory) {
    let last = traj.iterations.last().expect("non-empty trajectory");
    match last.rel_err {
        Some(e) => println!(
            "iterations: {}  loss: {:e}  rel_err: {:e}  stop: {:?}",
            last.iter, last.loss, e, traj.stop_reason
        ),
        None => println!(
            "iterations: {}  loss: {:e}  stop: {:?}",
            last.iter, last.loss, traj.stop_reason
        ),
    }
}

fn style_name(style: TruthStyle) -> String {
    match style {
        TruthStyle::GaussianCore => "gaussian".into(),
        TruthStyle::PrescribedKappa(k) => format!("kappa:{k}"),
    }
}

fn run(cmd: Cmd) -> Result<bool, Error> {
    match cmd {
        Cmd::GenTruth {
            n,
            r,
            style,
            seed,
            out,
            factors_out,
        } => {
            let seed = effective_seed(seed);
            announce(serde_json::json!({
                "cmd": "gen-truth", "n": n, "r": r, "style": style_name(style),
                "seed": seed, "out": out, "factors_out": factors_out,
            }));
            let g = make_ground_truth(n, r, style, seed)?;
            io::save_tensor(&out, &g.reconstruct()?)?;
            if let Some(path) = factors_out {
                io::save_quad(&path, &g.factors)?;
            }
            println!(
                "sigma_max: {:.6}  sigma_min: {:.6}  kappa: {:.4}  mu: {:.3}",
                g.sigma_max(),
                g.sigma_min(),
                g.sigma.kappa,
                g.mu
            );
            Ok(false)
        }
        Cmd::Sample {
            truth,
            p,
            seed,
            snr_db,
            noise_sigma,
            out,
        } => {
            let seed = effective_seed(seed);
            announce(serde_json::json!({
                "cmd": "sample", "truth": truth, "p": p, "seed": seed,
                "snr_db": snr_db, "noise_sigma": noise_sigma, "out": out,
            }));
            let x = io::load_tensor(&truth)?;
            let sigma = match (noise_sigma, snr_db) {
                (Some(s), _) => s,
                (None, Some(db)) => scaledgd::completion::sigma_w_from_snr_db(&x, db),
                (None, None) => 0.0,
            };
            let mask = sample_mask(x.dims(), p, seed)?;
            let obs = observe(&x, &mask, sigma)?;
            io::save_observations(&out, &obs)?;
            println!(
                "observed {} of {} entries (noise sigma {:e})",
                obs.len(),
                x.len(),
                sigma
            );
            Ok(false)
        }
        Cmd::Complete {
            obs,
            r,
            alg,
            init,
            seed,
            p_mode,
            projection_b,
            truth,
            traj,
            out,
            factors_out,
            solver,
        } => {
            let seed = effective_seed(seed);
            announce(serde_json::json!({
                "cmd": "complete", "obs": obs, "r": r, "alg": format!("{alg:?}"),
                "init": format!("{init:?}"), "seed": seed, "p_mode": format!("{p_mode:?}"),
                "projection_b": projection_b, "truth": truth,
                "eta": solver.eta, "iters": solver.iters, "tol": solver.tol,
            }));
            let observations = io::load_observations(&obs)?;
            let truth_info = match &truth {
                Some(path) => Some(TruthInfo::from_tensor(io::load_tensor(path)?)?),
                None => None,
            };
            let mut params = CompletionParams {
                solver: solver.to_params(),
                p_mode: match p_mode {
                    PModeArg::Given => PMode::Given,
                    PModeArg::Estimated => PMode::Estimated,
                },
                init: match init {
                    InitArg::Spectral => CompletionInit::Spectral,
                    InitArg::Random => CompletionInit::Random { seed },
                },
            };
            if let Some(b) = projection_b {
                params.solver.use_projection = true;
                params.solver.projection_b = Some(b);
            }
            let trajectory = match alg {
                AlgArg::Scaledgd => {
                    solve_completion(&observations, r, &params, truth_info.as_ref())?
                }
                AlgArg::Gd => {
                    let ti = truth_info.as_ref().ok_or_else(|| {
                        Error::Parameter("--alg gd requires --truth for sigma_max".into())
                    })?;
                    solve_completion_gd(&observations, r, &params, ti)?
                }
            };
            write_solution_files(&trajectory, &traj, &out, &factors_out)?;
            report_final(&trajectory);
            Ok(trajectory.stop_reason == StopReason::Diverged)
        }
        Cmd::Regress {
            truth,
            m,
            r,
            seed,
            alg,
            y,
            y_out,
            traj,
            out,
            factors_out,
            solver,
        } => {
            let seed = effective_seed(seed);
            announce(serde_json::json!({
                "cmd": "regress", "truth": truth, "m": m, "r": r, "seed": seed,
                "alg": format!("{alg:?}"), "y": y, "y_out": y_out,
                "eta": solver.eta, "iters": solver.iters, "tol": solver.tol,
            }));
            let x = io::load_tensor(&truth)?;
            let design = GaussianDesign::new(m, x.dims(), seed)?;
            let measurements = match &y {
                Some(path) => io::load_measurements(path)?,
                None => design.forward(&x)?,
            };
            if let Some(path) = &y_out {
                io::save_measurements(path, &measurements)?;
            }
            let truth_info = TruthInfo::from_tensor(x)?;
            let params = solver.to_params();
            let trajectory = match alg {
                AlgArg::Scaledgd => solve_regression(
                    &design,
                    &measurements,
                    r,
                    &params,
                    Some(&truth_info),
                    RegressionInit::Spectral,
                )?,
                AlgArg::Gd => solve_regression_gd(
                    &design,
                    &measurements,
                    r,
                    &params,
                    &truth_info,
                    RegressionInit::Spectral,
                )?,
            };
            write_solution_files(&trajectory, &traj, &out, &factors_out)?;
            report_final(&trajectory);
            Ok(trajectory.stop_reason == StopReason::Diverged)
        }
        Cmd::Factorize {
            target,
            r,
            traj,
            out,
            factors_out,
            solver,
        } => {
            announce(serde_json::json!({
                "cmd": "factorize", "target": target, "r": r,
                "eta": solver.eta, "iters": solver.iters, "tol": solver.tol,
            }));
            let x = io::load_tensor(&target)?;
            let f0 = scaledgd::hosvd(&x, r)?;
            let trajectory = solve_factorization(&x, f0, &solver.to_params())?;
            write_solution_files(&trajectory, &traj, &out, &factors_out)?;
            report_final(&trajectory);
            Ok(trajectory.stop_reason == StopReason::Diverged)
        }
        Cmd::TripProbe {
            m,
            n,
            r,
            trials,
            seed,
            json,
        } => {
            let seed = effective_seed(seed);
            announce(serde_json::json!({
                "cmd": "trip-probe", "m": m, "n": n, "r": r, "trials": trials, "seed": seed,
            }));
            let design = GaussianDesign::new(m, n, seed)?;
            let est = trip_probe(&design, r, trials, seed)?;
            println!("delta_hat: {:.6}", est.delta_hat);
            println!(
                "worst ratios: [{:.6}, {:.6}] over {} trials",
                est.worst_ratio_low, est.worst_ratio_high, est.trials
            );
            if let Some(path) = json {
                let report = serde_json::json!({
                    "delta_hat": est.delta_hat,
                    "trials": est.trials,
                    "r": est.r,
                    "worst_ratio_low": est.worst_ratio_low,
                    "worst_ratio_high": est.worst_ratio_high,
                });
                io::write_atomic(&path, |w| {
                    use std::io::Write;
                    writeln!(w, "{}", serde_json::to_string_pretty(&report).unwrap())?;
                    Ok(())
                })?;
            }
            Ok(false)
        }
        Cmd::Experiment { config, out_dir } => {
            let text = std::fs::read_to_string(&config)?;
            let cfg: ExperimentConfig =
                serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))?;
            cfg.validate()?;
            announce(serde_json::to_value(&cfg).map_err(|e| Error::Format(e.to_string()))?);
            std::fs::create_dir_all(&out_dir)?;
            let stem: &Path = &out_dir;
            let mut outputs = Vec::new();
            match cfg.kind {
                ExperimentKind::KappaSweep => {
                    let rows = run_kappa_sweep(&cfg)?;
                    let path = stem.join("kappa_sweep.csv");
                    write_kappa_csv(&path, &rows)?;
                    outputs.push("kappa_sweep.csv".to_string());
                    for row in &rows {
                        println!(
                            "kappa {:>6.2}  {:<9} median iters {:>4}  success {:.2}",
                            row.kappa,
                            row.algorithm.name(),
                            row.median_iters,
                            row.success_rate
                        );
                    }
                }
                ExperimentKind::PhaseTransition => {
                    let rows = run_phase_transition(&cfg)?;
                    let path = stem.join("phase_transition.csv");
                    write_phase_csv(&path, &rows)?;
                    outputs.push("phase_transition.csv".to_string());
                    for row in &rows {
                        println!(
                            "p {:>7.4}  scaled {:>8.3}  success {:.2}",
                            row.p, row.scaled_sample_size, row.success_rate
                        );
                    }
                }
                ExperimentKind::Convergence => {
                    let records = run_convergence(&cfg)?;
                    let path = stem.join("convergence.csv");
                    write_convergence_csv(&path, &records)?;
                    outputs.push("convergence.csv".to_string());
                    println!("{} runs recorded", records.len());
                }
            }
            write_summary_json(&stem.join("summary.json"), &cfg, &outputs)?;
            Ok(false)
        }
    }
}
