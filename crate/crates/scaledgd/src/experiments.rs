//! Desk-scale reproductions of the numerical studies: condition-number
//! sweeps, sampling phase transitions, and convergence/noise curves, all
//! over the completion solvers. Trials parallelize across seeds; every
//! cell is reproducible from `(config, seed list)`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::completion::{
    observe, sample_mask, sigma_w_from_snr_db, solve_completion, solve_completion_gd,
    CompletionInit, CompletionParams, PMode,
};
use crate::error::{Error, Result};
use crate::factors::{make_ground_truth, TruthStyle};
use crate::io::write_atomic;
use crate::rng::hash_bytes;
use crate::solver::{SolverParams, Trajectory, TruthInfo};

/// Relative error below which a run counts as a successful recovery.
pub const SUCCESS_REL_ERR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    KappaSweep,
    PhaseTransition,
    Convergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    ScaledGd,
    Gd,
}

impl Algo {
    pub fn name(&self) -> &'static str {
        match self {
            Algo::ScaledGd => "scaledgd",
            Algo::Gd => "gd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    #[default]
    Spectral,
    Random,
}

fn default_eta() -> f64 {
    0.3
}

fn default_max_iters() -> usize {
    150
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub r: usize,
    /// Observation probability for kappa sweeps and convergence runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Observation probability grid for the phase transition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    #[serde(default)]
    pub kappa_list: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub init: InitKind,
    /// Noise levels in dB; when set, convergence runs use a Gaussian-core
    /// truth and add observation noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    pub algorithms: Vec<Algo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Parameter("seeds must be non-empty".into()));
        }
        if self.n == 0 || self.r == 0 || self.r > self.n {
            return Err(Error::Parameter(format!(
                "invalid sizes n={}, r={}",
                self.n, self.r
            )));
        }
        if self.kappa_list.iter().any(|&k| k < 1.0) {
            return Err(Error::Parameter("kappa values must be at least 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Parameter("algorithms must be non-empty".into()));
        }
        match self.kind {
            ExperimentKind::KappaSweep => {
                if self.p.is_none() {
                    return Err(Error::Parameter("kappa sweep requires p".into()));
                }
                if self.kappa_list.is_empty() {
                    return Err(Error::Parameter("kappa sweep requires kappa_list".into()));
                }
            }
            ExperimentKind::PhaseTransition => {
                if self.p_list.as_ref().map_or(true, |l| l.is_empty()) {
                    return Err(Error::Parameter("phase transition requires p_list".into()));
                }
            }
            ExperimentKind::Convergence => {
                if self.p.is_none() {
                    return Err(Error::Parameter("convergence runs require p".into()));
                }
                if self.kappa_list.is_empty() && self.snr_db.is_none() {
                    return Err(Error::Parameter(
                        "convergence runs require kappa_list or snr_db".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", hash_bytes(json.as_bytes()))
    }
}

/// One completion trial; failures become `None` so a sweep never aborts.
struct TrialSpec {
    n: usize,
    r: usize,
    style: TruthStyle,
    p: f64,
    eta: f64,
    max_iters: usize,
    seed: u64,
    algo: Algo,
    init: InitKind,
    snr_db: Option<f64>,
    rel_tol: f64,
}

fn run_trial(spec: &TrialSpec) -> Option<(Trajectory, f64)> {
    let dims = (spec.n, spec.n, spec.n);
    let ranks = (spec.r, spec.r, spec.r);
    let g = make_ground_truth(dims, ranks, spec.style, spec.seed).ok()?;
    let x = g.reconstruct().ok()?;
    let mask = sample_mask(dims, spec.p, spec.seed).ok()?;
    let sigma_w = spec.snr_db.map(|db| sigma_w_from_snr_db(&x, db)).unwrap_or(0.0);
    let obs = observe(&x, &mask, sigma_w).ok()?;
    let truth = TruthInfo::from_ground_truth(&g).ok()?;
    let init = match spec.init {
        InitKind::Spectral => CompletionInit::Spectral,
        InitKind::Random => CompletionInit::Random { seed: spec.seed },
    };
    let params = CompletionParams {
        solver: SolverParams {
            eta: spec.eta,
            max_iters: spec.max_iters,
            rel_tol: spec.rel_tol,
            use_projection: false,
            projection_b: None,
            record_every: 1,
        },
        p_mode: PMode::Given,
        init,
    };
    let traj = match spec.algo {
        Algo::ScaledGd => solve_completion(&obs, ranks, &params, Some(&truth)).ok()?,
        Algo::Gd => solve_completion_gd(&obs, ranks, &params, &truth).ok()?,
    };
    Some((traj, g.sigma.kappa))
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaSweepRow {
    pub kappa: f64,
    pub algorithm: Algo,
    /// Median (lower median) iterations to the success threshold; failed
    /// trials count as `max_iters`, so the value is a lower bound there.
    pub median_iters: usize,
    pub success_rate: f64,
}

fn lower_median(mut xs: Vec<usize>) -> usize {
    xs.sort_unstable();
    xs[(xs.len() - 1) / 2]
}

/// Iterations-to-success per condition number and algorithm
/// (prescribed-kappa ground truth).
pub fn run_kappa_sweep(cfg: &ExperimentConfig) -> Result<Vec<KappaSweepRow>> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::KappaSweep {
        return Err(Error::Parameter("config kind is not kappa_sweep".into()));
    }
    let p = cfg.p.unwrap();
    let mut cells: Vec<(f64, Algo)> = Vec::new();
    for &kappa in &cfg.kappa_list {
        for &algo in &cfg.algorithms {
            cells.push((kappa, algo));
        }
    }
    let rows: Vec<KappaSweepRow> = cells
        .into_iter()
        .map(|(kappa, algo)| {
            let outcomes: Vec<(usize, bool)> = cfg
                .seeds
                .par_iter()
                .map(|&seed| {
                    let spec = TrialSpec {
                        n: cfg.n,
                        r: cfg.r,
                        style: TruthStyle::PrescribedKappa(kappa),
                        p,
                        eta: cfg.eta,
                        max_iters: cfg.max_iters,
                        seed,
                        algo,
                        init: cfg.init,
                        snr_db: None,
                        rel_tol: SUCCESS_REL_ERR,
                    };
                    match run_trial(&spec) {
                        Some((traj, _)) => match traj.iters_to_rel_err(SUCCESS_REL_ERR) {
                            Some(it) => (it, true),
                            None => (cfg.max_iters, false),
                        },
                        None => (cfg.max_iters, false),
                    }
                })
                .collect();
            let iters: Vec<usize> = outcomes.iter().map(|o| o.0).collect();
            let successes = outcomes.iter().filter(|o| o.1).count();
            KappaSweepRow {
                kappa,
                algorithm: algo,
                median_iters: lower_median(iters),
                success_rate: successes as f64 / outcomes.len() as f64,
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct PhaseRow {
    pub n: usize,
    pub p: f64,
    /// `p·n³ / (n^{3/2}·r)` — the scaled sample coordinate reported next
    /// to the raw probability.
    pub scaled_sample_size: f64,
    pub success_rate: f64,
}

/// Success rate per observation probability (Gaussian-core truth).
pub fn run_phase_transition(cfg: &ExperimentConfig) -> Result<Vec<PhaseRow>> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::PhaseTransition {
        return Err(Error::Parameter("config kind is not phase_transition".into()));
    }
    let p_list = cfg.p_list.clone().unwrap();
    let algo = cfg.algorithms[0];
    let rows: Vec<PhaseRow> = p_list
        .into_iter()
        .map(|p| {
            let successes: usize = cfg
                .seeds
                .par_iter()
                .map(|&seed| {
                    let spec = TrialSpec {
                        n: cfg.n,
                        r: cfg.r,
                        style: TruthStyle::GaussianCore,
                        p,
                        eta: cfg.eta,
                        max_iters: cfg.max_iters,
                        seed,
                        algo,
                        init: cfg.init,
                        snr_db: None,
                        rel_tol: SUCCESS_REL_ERR,
                    };
                    match run_trial(&spec) {
                        Some((traj, _)) => {
                            usize::from(traj.iters_to_rel_err(SUCCESS_REL_ERR).is_some())
                        }
                        None => 0,
                    }
                })
                .sum();
            let nf = cfg.n as f64;
            PhaseRow {
                n: cfg.n,
                p,
                scaled_sample_size: p * nf.powi(3) / (nf.powf(1.5) * cfg.r as f64),
                success_rate: successes as f64 / cfg.seeds.len() as f64,
            }
        })
        .collect();
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct IterPoint {
    pub iter: usize,
    pub rel_err: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub algorithm: Algo,
    /// Measured condition number of the trial's ground truth.
    pub kappa: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub points: Vec<IterPoint>,
    pub iters_to_success: Option<usize>,
    pub success: bool,
}

/// Full per-iteration error curves for each (algorithm, kappa-or-SNR,
/// seed) combination. Runs go the full `max_iters` so plateaus are
/// visible.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.kind != ExperimentKind::Convergence {
        return Err(Error::Parameter("config kind is not convergence".into()));
    }
    let p = cfg.p.unwrap();
    let hash = cfg.hash();
    // Noise study: Gaussian-core truth per SNR; otherwise prescribed kappa.
    let variants: Vec<(TruthStyle, Option<f64>)> = match &cfg.snr_db {
        Some(levels) => levels.iter().map(|&db| (TruthStyle::GaussianCore, Some(db))).collect(),
        None => cfg
            .kappa_list
            .iter()
            .map(|&k| (TruthStyle::PrescribedKappa(k), None))
            .collect(),
    };
    let mut grid: Vec<(TruthStyle, Option<f64>, Algo, u64)> = Vec::new();
    for &(style, snr) in &variants {
        for &algo in &cfg.algorithms {
            for &seed in &cfg.seeds {
                grid.push((style, snr, algo, seed));
            }
        }
    }
    let records: Vec<RunRecord> = grid
        .par_iter()
        .filter_map(|&(style, snr, algo, seed)| {
            let spec = TrialSpec {
                n: cfg.n,
                r: cfg.r,
                style,
                p,
                eta: cfg.eta,
                max_iters: cfg.max_iters,
                seed,
                algo,
                init: cfg.init,
                snr_db: snr,
                rel_tol: 0.0,
            };
            let (traj, kappa) = run_trial(&spec)?;
            let points: Vec<IterPoint> = traj
                .iterations
                .iter()
                .map(|r| IterPoint {
                    iter: r.iter,
                    rel_err: r.rel_err.unwrap_or(f64::NAN),
                    wall_ms: r.wall_ms,
                })
                .collect();
            let iters_to_success = traj.iters_to_rel_err(SUCCESS_REL_ERR);
            Some(RunRecord {
                config_hash: hash.clone(),
                algorithm: algo,
                kappa,
                seed,
                snr_db: snr,
                points,
                iters_to_success,
                success: iters_to_success.is_some(),
            })
        })
        .collect();
    Ok(records)
}

/// Per-iteration wall times of a trajectory, first (warmup) iteration
/// excluded; median.
pub fn median_iter_ms(traj: &Trajectory) -> Option<f64> {
    let times: Vec<f64> = traj
        .iterations
        .windows(2)
        .skip(1)
        .map(|w| w[1].wall_ms - w[0].wall_ms)
        .collect();
    if times.is_empty() {
        return None;
    }
    let mut sorted = times;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(sorted[(sorted.len() - 1) / 2])
}

pub fn write_kappa_csv(path: &Path, rows: &[KappaSweepRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "kappa,algorithm,median_iters,success_rate")?;
        for r in rows {
            writeln!(
                w,
                "{},{},{},{}",
                r.kappa,
                r.algorithm.name(),
                r.median_iters,
                r.success_rate
            )?;
        }
        Ok(())
    })
}

pub fn write_phase_csv(path: &Path, rows: &[PhaseRow]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "n,p,scaled_sample_size,success_rate")?;
        for r in rows {
            writeln!(w, "{},{},{},{}", r.n, r.p, r.scaled_sample_size, r.success_rate)?;
        }
        Ok(())
    })
}

pub fn write_convergence_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    write_atomic(path, |w| {
        writeln!(w, "algorithm,kappa,snr_db,seed,iter,rel_err,wall_ms")?;
        for rec in records {
            for p in &rec.points {
                writeln!(
                    w,
                    "{},{},{},{},{},{:e},{:.3}",
                    rec.algorithm.name(),
                    rec.kappa,
                    rec.snr_db.map(|v| v.to_string()).unwrap_or_default(),
                    rec.seed,
                    p.iter,
                    p.rel_err,
                    p.wall_ms
                )?;
            }
        }
        Ok(())
    })
}

/// JSON sidecar: config hash, library version, and the config itself.
pub fn write_summary_json(path: &Path, cfg: &ExperimentConfig, outputs: &[String]) -> Result<()> {
    let summary = serde_json::json!({
        "config_hash": cfg.hash(),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "outputs": outputs,
    });
    write_atomic(path, |w| {
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w, "{text}")?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            n: 12,
            r: 2,
            p: Some(0.5),
            p_list: Some(vec![0.3, 0.6]),
            kappa_list: vec![1.0, 2.0],
            eta: 0.3,
            max_iters: 40,
            seeds: vec![1, 2, 3],
            init: InitKind::Spectral,
            snr_db: None,
            algorithms: vec![Algo::ScaledGd],
            output_path: None,
        }
    }

    #[test]
    fn config_validation_catches_missing_fields() {
        let mut cfg = tiny_config(ExperimentKind::KappaSweep);
        cfg.p = None;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(ExperimentKind::PhaseTransition);
        cfg.p_list = None;
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_config(ExperimentKind::Convergence);
        cfg.seeds.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let cfg = tiny_config(ExperimentKind::KappaSweep);
        let h1 = cfg.hash();
        let h2 = cfg.hash();
        assert_eq!(h1, h2);
        let mut cfg2 = cfg.clone();
        cfg2.eta = 0.4;
        assert_ne!(h1, cfg2.hash());
    }

    #[test]
    fn kappa_sweep_runs_on_a_tiny_fixture() {
        let cfg = tiny_config(ExperimentKind::KappaSweep);
        let rows = run_kappa_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for row in &rows {
            assert!(row.success_rate > 0.0, "row {row:?}");
            assert!(row.median_iters <= cfg.max_iters);
        }
    }
}
