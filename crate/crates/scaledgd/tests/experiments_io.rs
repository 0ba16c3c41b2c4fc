//! Experiment harness reproducibility and table formats, plus binary
//! file-format round trips.

mod common;

use common::*;
use proptest::prelude::*;
use scaledgd::experiments::{
    median_iter_ms, run_convergence, run_kappa_sweep, write_convergence_csv, write_kappa_csv,
    write_phase_csv, write_summary_json, Algo, ExperimentConfig, ExperimentKind, InitKind,
    PhaseRow,
};
use scaledgd::{
    io, make_ground_truth, observe, sample_mask, solve_completion, solve_completion_gd,
    CompletionParams, ObservationSet, SolverParams, Tensor3, TruthInfo, TruthStyle,
};

fn small_config(kind: ExperimentKind) -> ExperimentConfig {
    ExperimentConfig {
        kind,
        n: 14,
        r: 2,
        p: Some(0.4),
        p_list: None,
        kappa_list: vec![1.0, 5.0],
        eta: 0.3,
        max_iters: 50,
        seeds: vec![3, 4, 5, 6],
        init: InitKind::Spectral,
        snr_db: None,
        algorithms: vec![Algo::ScaledGd, Algo::Gd],
        output_path: None,
    }
}

#[test]
fn sweep_cells_replay_bitwise() {
    let cfg = small_config(ExperimentKind::KappaSweep);
    let a = run_kappa_sweep(&cfg).unwrap();
    let b = run_kappa_sweep(&cfg).unwrap();
    assert_eq!(a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        assert_eq!(ra.median_iters, rb.median_iters);
        assert_eq!(ra.success_rate.to_bits(), rb.success_rate.to_bits());
    }
}

#[test]
fn convergence_records_carry_full_curves() {
    let mut cfg = small_config(ExperimentKind::Convergence);
    cfg.max_iters = 20;
    cfg.seeds = vec![1, 2];
    let records = run_convergence(&cfg).unwrap();
    // 2 kappas x 2 algorithms x 2 seeds
    assert_eq!(records.len(), 8);
    for rec in &records {
        assert_eq!(rec.points.len(), 21, "record should span all iterations");
        assert!(!rec.config_hash.is_empty());
        // wall clock is monotone
        for w in rec.points.windows(2) {
            assert!(w[1].wall_ms >= w[0].wall_ms);
        }
    }
}

#[test]
fn scaled_steps_add_negligible_overhead() {
    // Median per-iteration wall time of ScaledGD stays within 1.5x of
    // plain GD on the same data (the preconditioner work is r x r).
    let g = make_ground_truth((40, 40, 40), (5, 5, 5), TruthStyle::PrescribedKappa(2.0), 7)
        .unwrap();
    let x = g.reconstruct().unwrap();
    let mask = sample_mask(x.dims(), 0.3, 5).unwrap();
    let obs = observe(&x, &mask, 0.0).unwrap();
    let truth = TruthInfo::from_ground_truth(&g).unwrap();
    let params = CompletionParams {
        solver: SolverParams {
            eta: 0.3,
            max_iters: 40,
            rel_tol: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let scaled = solve_completion(&obs, (5, 5, 5), &params, Some(&truth)).unwrap();
    let plain = solve_completion_gd(&obs, (5, 5, 5), &params, &truth).unwrap();
    let ms_scaled = median_iter_ms(&scaled).unwrap();
    let ms_plain = median_iter_ms(&plain).unwrap();
    assert!(
        ms_scaled <= 1.5 * ms_plain,
        "scaled {ms_scaled:.3} ms vs plain {ms_plain:.3} ms"
    );
}

#[test]
fn csv_outputs_have_documented_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(ExperimentKind::KappaSweep);
    let rows = run_kappa_sweep(&cfg).unwrap();
    let kappa_path = dir.path().join("kappa.csv");
    write_kappa_csv(&kappa_path, &rows).unwrap();
    let text = std::fs::read_to_string(&kappa_path).unwrap();
    assert!(text.starts_with("kappa,algorithm,median_iters,success_rate\n"));
    assert_eq!(text.lines().count(), rows.len() + 1);

    let phase_path = dir.path().join("phase.csv");
    write_phase_csv(
        &phase_path,
        &[PhaseRow {
            n: 10,
            p: 0.5,
            scaled_sample_size: 1.0,
            success_rate: 0.9,
        }],
    )
    .unwrap();
    let text = std::fs::read_to_string(&phase_path).unwrap();
    assert!(text.starts_with("n,p,scaled_sample_size,success_rate\n"));

    let mut conv_cfg = small_config(ExperimentKind::Convergence);
    conv_cfg.max_iters = 5;
    conv_cfg.seeds = vec![1];
    conv_cfg.kappa_list = vec![1.0];
    conv_cfg.algorithms = vec![Algo::ScaledGd];
    let records = run_convergence(&conv_cfg).unwrap();
    let conv_path = dir.path().join("conv.csv");
    write_convergence_csv(&conv_path, &records).unwrap();
    let text = std::fs::read_to_string(&conv_path).unwrap();
    assert!(text.starts_with("algorithm,kappa,snr_db,seed,iter,rel_err,wall_ms\n"));

    let summary_path = dir.path().join("summary.json");
    write_summary_json(&summary_path, &cfg, &["kappa.csv".into()]).unwrap();
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&summary_path).unwrap()).unwrap();
    assert_eq!(parsed["config_hash"], serde_json::json!(cfg.hash()));
    assert!(parsed["version"].is_string());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = small_config(ExperimentKind::PhaseTransition);
    let json = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back.hash(), cfg.hash());
}

#[test]
fn quad_files_round_trip() {
    let f = random_quad((5, 4, 3), (2, 2, 1), 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.tfq1");
    io::save_quad(&path, &f).unwrap();
    let back = io::load_quad(&path).unwrap();
    assert_eq!(back.u, f.u);
    assert_eq!(back.v, f.v);
    assert_eq!(back.w, f.w);
    assert_eq!(back.s.as_slice(), f.s.as_slice());
}

#[test]
fn measurement_files_round_trip() {
    let y: Vec<f64> = (0..17).map(|i| (i as f64 * 0.731).sin()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.yvc1");
    io::save_measurements(&path, &y).unwrap();
    assert_eq!(io::load_measurements(&path).unwrap(), y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tensor_files_round_trip(
        n1 in 1usize..5,
        n2 in 1usize..5,
        n3 in 1usize..5,
        seed in 0u64..500,
    ) {
        let x = random_tensor((n1, n2, n3), seed);
        let mut buf = Vec::new();
        io::write_tensor(&mut buf, &x).unwrap();
        let back = io::read_tensor(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.as_slice(), x.as_slice());
    }

    #[test]
    fn observation_files_round_trip(
        n in 2usize..6,
        p_millis in 100u32..1000,
        seed in 0u64..500,
    ) {
        let p = p_millis as f64 / 1000.0;
        let dims = (n, n, n);
        let x = random_tensor(dims, seed);
        let mask = sample_mask(dims, p, seed).unwrap();
        prop_assume!(!mask.indices.is_empty());
        let obs = observe(&x, &mask, 0.0).unwrap();
        let mut buf = Vec::new();
        io::write_observations(&mut buf, &obs).unwrap();
        let back: ObservationSet = io::read_observations(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(back.indices, obs.indices);
        prop_assert_eq!(back.values, obs.values);
        prop_assert_eq!(back.p.to_bits(), obs.p.to_bits());
    }
}

#[test]
fn atomic_write_leaves_no_temp_behind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.tns3");
    io::save_tensor(&path, &Tensor3::zeros((2, 2, 2))).unwrap();
    let leftovers: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().ends_with(".tmp"))
        .collect();
    assert!(leftovers.is_empty());
}
