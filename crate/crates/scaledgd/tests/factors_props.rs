//! Factor-space properties: preconditioner Grams against explicit breve
//! materialization, projection bounds, scaled-distance sandwich bounds,
//! and ground-truth canonical form.

mod common;

use common::*;
use nalgebra::DMatrix;
use scaledgd::factors::scaled_row_norms;
use scaledgd::{
    factor_grams, incoherence, make_ground_truth, reparameterize, scaled_distance,
    scaled_projection, FactorQuad, TruthStyle,
};

#[test]
fn breve_grams_match_explicit_materialization() {
    let f = random_quad((4, 5, 6), (2, 2, 2), 77);
    let grams = factor_grams(&f);
    let (bu, bv, bw) = breve_explicit(&f);
    for (got, expl) in [
        (&grams.gram_breve_u, &bu),
        (&grams.gram_breve_v, &bv),
        (&grams.gram_breve_w, &bw),
    ] {
        let explicit = expl.transpose() * expl;
        let rel = (got - &explicit).norm() / explicit.norm();
        assert!(rel <= 1e-12, "rel = {rel}");
    }
}

#[test]
fn breve_gram_is_squared_sigma_at_canonical_truth() {
    // At an orthonormal canonical truth the mode-1 breve Gram is the
    // diagonal of squared mode-1 singular values.
    let g = make_ground_truth((12, 11, 10), (3, 3, 3), TruthStyle::GaussianCore, 5).unwrap();
    let grams = factor_grams(&g.factors);
    for (k, gram) in [
        (0usize, &grams.gram_breve_u),
        (1, &grams.gram_breve_v),
        (2, &grams.gram_breve_w),
    ] {
        let sig = &g.sigma_diag[k];
        let scale = sig[0] * sig[0];
        for i in 0..gram.nrows() {
            for j in 0..gram.ncols() {
                let expect = if i == j { sig[i] * sig[i] } else { 0.0 };
                assert!(
                    (gram[(i, j)] - expect).abs() <= 1e-10 * scale,
                    "mode {k} entry ({i},{j}): {} vs {expect}",
                    gram[(i, j)]
                );
            }
        }
    }
}

#[test]
fn reconstruction_is_invariant_under_reparameterization() {
    for seed in 0..5u64 {
        let f = random_quad((6, 5, 7), (3, 2, 2), 100 + seed);
        let q1 = random_invertible(3, 200 + seed, 3.0);
        let q2 = random_invertible(2, 300 + seed, 3.0);
        let q3 = random_invertible(2, 400 + seed, 3.0);
        let g = reparameterize(&f, &q1, &q2, &q3).unwrap();
        let x1 = f.reconstruct().unwrap();
        let x2 = g.reconstruct().unwrap();
        assert!(rel_diff(&x2, &x1) <= 1e-10, "seed {seed}: {}", rel_diff(&x2, &x1));
    }
}

#[test]
fn projection_halves_a_single_violating_row() {
    let g = make_ground_truth((10, 10, 10), (2, 2, 2), TruthStyle::GaussianCore, 3).unwrap();
    let mut f = g.factors.clone();
    // Inflate one U row so its scaled norm is exactly twice the bound B.
    let worst = scaled_row_norms(&f).into_iter().fold(0.0, f64::max);
    let b = 4.0 * worst;
    let grams = factor_grams(&f);
    let row_norm = |f: &FactorQuad, i: usize| -> f64 {
        let mg = &f.u * &grams.gram_breve_u;
        (0..f.u.ncols()).map(|j| f.u[(i, j)] * mg[(i, j)]).sum::<f64>().sqrt()
    };
    let n1 = f.u.nrows() as f64;
    let current = row_norm(&f, 0) * n1.sqrt();
    let target = 2.0 * b;
    let inflate = target / current;
    for j in 0..f.u.ncols() {
        f.u[(0, j)] *= inflate;
    }
    let out = scaled_projection(&f, b).unwrap();
    // Inflating a row also rescales its breve-measured norm linearly, so
    // the scalar applied must be exactly 1/2.
    for j in 0..f.u.ncols() {
        assert!((out.u[(0, j)] - 0.5 * f.u[(0, j)]).abs() <= 1e-12 * f.u[(0, j)].abs());
    }
    for i in 1..f.u.nrows() {
        for j in 0..f.u.ncols() {
            assert_eq!(out.u[(i, j)], f.u[(i, j)], "row {i} should be untouched");
        }
    }
}

#[test]
fn projection_output_satisfies_the_incoherence_bound() {
    for seed in 0..5u64 {
        let f = random_quad((8, 9, 7), (3, 2, 2), 500 + seed);
        let worst = scaled_row_norms(&f).into_iter().fold(0.0, f64::max);
        let b = 0.5 * worst;
        let out = scaled_projection(&f, b).unwrap();
        // Direct recomputation on the output.
        let norms = scaled_row_norms(&out);
        for (k, &n) in norms.iter().enumerate() {
            assert!(n <= b * (1.0 + 1e-10), "seed {seed} mode {k}: {n} > {b}");
        }
        // Second application is a no-op.
        let twice = scaled_projection(&out, b).unwrap();
        assert_eq!(twice.u, out.u);
        assert_eq!(twice.v, out.v);
        assert_eq!(twice.w, out.w);
    }
}

#[test]
fn scaled_distance_recovers_reparameterizations() {
    for seed in 0..5u64 {
        let g = make_ground_truth((9, 8, 7), (3, 2, 2), TruthStyle::GaussianCore, 600 + seed)
            .unwrap();
        let q1 = random_invertible(3, 700 + seed, 3.0);
        let q2 = random_invertible(2, 800 + seed, 3.0);
        let q3 = random_invertible(2, 900 + seed, 3.0);
        let f = reparameterize(&g.factors, &q1, &q2, &q3).unwrap();
        let rep = scaled_distance(&f, &g).unwrap();
        assert!(
            rep.dist <= 1e-6 * g.sigma_min(),
            "seed {seed}: dist = {} vs sigma_min {}",
            rep.dist,
            g.sigma_min()
        );
    }
}

#[test]
fn scaled_distance_sandwich_bounds() {
    let upper_const = (2f64.sqrt() + 1.0).powf(1.5);
    for seed in 0..8u64 {
        let g = make_ground_truth((9, 8, 7), (2, 2, 2), TruthStyle::GaussianCore, 40 + seed)
            .unwrap();
        // Perturbations from small to moderate.
        let rel = [0.01, 0.05, 0.15][seed as usize % 3];
        let f = perturb_quad(&g, rel, seed);
        let rep = scaled_distance(&f, &g).unwrap();
        let diff = rep.rel_fro * g.reconstruct().unwrap().norm();
        assert!(
            rep.dist <= upper_const * diff * (1.0 + 1e-9),
            "seed {seed}: dist {} vs upper {}",
            rep.dist,
            upper_const * diff
        );
        if rep.dist <= 0.2 * g.sigma_min() {
            assert!(
                diff <= 3.0 * rep.dist * (1.0 + 1e-9),
                "seed {seed}: diff {} vs 3*dist {}",
                diff,
                3.0 * rep.dist
            );
        }
    }
}

#[test]
fn gaussian_core_truth_satisfies_canonical_gram_condition() {
    let g = make_ground_truth((50, 50, 50), (5, 5, 5), TruthStyle::GaussianCore, 11).unwrap();
    assert!(
        g.canon_offdiag < 1e-10,
        "off-diagonal residual {}",
        g.canon_offdiag
    );
    // M_k(S)M_k(S)ᵀ diagonal with descending entries.
    for k in 0..3 {
        let diag = &g.sigma_diag[k];
        for w in diag.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }
}

#[test]
fn incoherence_stays_moderate_for_random_factors() {
    // Random 100x5 orthonormal factors: spikiness stays well below 10.
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let g = make_ground_truth((100, 100, 100), (5, 5, 5), TruthStyle::GaussianCore, seed)
            .unwrap();
        let mu = incoherence(&g).unwrap();
        worst = worst.max(mu);
        assert!(mu >= 1.0 - 1e-12);
        assert!(mu <= 10.0, "seed {seed}: mu = {mu}");
    }
    // Typical range sanity (generous envelope around [1.5, 4]).
    assert!(worst >= 1.2, "worst mu suspiciously small: {worst}");
}

#[test]
fn ground_truth_factors_are_orthonormal() {
    let g = make_ground_truth((30, 20, 25), (4, 3, 2), TruthStyle::GaussianCore, 2).unwrap();
    for m in [&g.factors.u, &g.factors.v, &g.factors.w] {
        let gram = m.transpose() * m;
        let dev = (&gram - DMatrix::<f64>::identity(gram.nrows(), gram.ncols())).norm();
        assert!(dev <= 1e-12, "deviation {dev}");
    }
}

#[test]
fn prescribed_kappa_sigma_diag_shape() {
    let g = make_ground_truth((20, 20, 20), (5, 5, 5), TruthStyle::PrescribedKappa(10.0), 1)
        .unwrap();
    // Mode 1 carries the prescribed spectrum 1 .. 1/kappa.
    let d = &g.sigma_diag[0];
    assert!((d[0] - 1.0).abs() <= 1e-10);
    assert!((d[4] - 0.1).abs() <= 1e-10);
    // Modes 2 and 3 are flat at the rms value.
    let rms = (d.iter().map(|s| s * s).sum::<f64>() / 5.0).sqrt();
    for k in 1..3 {
        for &s in &g.sigma_diag[k] {
            assert!((s - rms).abs() <= 1e-10);
        }
    }
}
