//! Shared oracles for the integration suites: explicit Kronecker
//! constructions, an independent HOOI refinement for quasi-optimality
//! bounds, finite differences, and dense-path completion gradients.
//! Everything here sticks to the public API and re-derives results from
//! first principles rather than reusing the library's internal paths.

#![allow(dead_code)]

use nalgebra::DMatrix;

use scaledgd::factors::random_orthonormal;
use scaledgd::rng::Stream;
use scaledgd::{
    matricize, multilinear_multiply, FactorQuad, GradientBundle, GroundTruth, Matricization,
    ObservationSet, Tensor3,
};

pub fn dmatrix_of(m: &Matricization) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows, m.cols, |i, j| m.get(i, j))
}

/// Explicit `vec(X)` in the library's vectorization order.
pub fn vec_of(x: &Tensor3) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(x.as_slice())
}

pub fn tensor_norm(x: &Tensor3) -> f64 {
    x.norm()
}

pub fn rel_diff(a: &Tensor3, b: &Tensor3) -> f64 {
    a.sub(b).unwrap().norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Random dense tensor with unit-variance entries.
pub fn random_tensor(dims: (usize, usize, usize), seed: u64) -> Tensor3 {
    let s = Stream::new(seed, 0x7457, 0);
    let mut t = Tensor3::zeros(dims);
    for (i, v) in t.as_mut_slice().iter_mut().enumerate() {
        *v = s.normal_at(i as u64);
    }
    t
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let s = Stream::new(seed, 0x7458, 0);
    DMatrix::from_fn(rows, cols, |i, j| s.normal_at((i + j * rows) as u64))
}

/// Random quadruple with Gaussian factors and core (not orthonormal).
pub fn random_quad(
    dims: (usize, usize, usize),
    ranks: (usize, usize, usize),
    seed: u64,
) -> FactorQuad {
    FactorQuad::new(
        random_matrix(dims.0, ranks.0, seed.wrapping_add(1)),
        random_matrix(dims.1, ranks.1, seed.wrapping_add(2)),
        random_matrix(dims.2, ranks.2, seed.wrapping_add(3)),
        random_tensor(ranks, seed.wrapping_add(4)),
    )
    .unwrap()
}

/// Random invertible matrix with condition number at most `cond_max`:
/// two random rotations around a log-spaced diagonal.
pub fn random_invertible(r: usize, seed: u64, cond_max: f64) -> DMatrix<f64> {
    let q1 = random_orthonormal(r, r, seed, 0x5151, 1);
    let q2 = random_orthonormal(r, r, seed, 0x5252, 1);
    let half = cond_max.sqrt();
    let s = Stream::new(seed, 0x5353, 0);
    let diag = DMatrix::from_fn(r, r, |i, j| {
        if i == j {
            // log-uniform in [1/half, half]
            let u = s.uniform_at(i as u64);
            (u * (half.ln() - (1.0 / half).ln()) + (1.0 / half).ln()).exp()
        } else {
            0.0
        }
    });
    &q1 * diag * q2.transpose()
}

/// Additive Gaussian perturbation of the truth's quadruple sized so the
/// scaled distance is approximately `rel · σ_min` (the weighted norm of
/// the perturbation equals it exactly; the aligned distance is no
/// larger).
pub fn perturb_quad(g: &GroundTruth, rel: f64, seed: u64) -> FactorQuad {
    let f = &g.factors;
    let du = random_matrix(f.u.nrows(), f.u.ncols(), seed.wrapping_add(11));
    let dv = random_matrix(f.v.nrows(), f.v.ncols(), seed.wrapping_add(12));
    let dw = random_matrix(f.w.nrows(), f.w.ncols(), seed.wrapping_add(13));
    let ds = random_tensor(f.s.dims(), seed.wrapping_add(14));
    let weighted = |d: &DMatrix<f64>, sig: &[f64]| -> f64 {
        let mut acc = 0.0;
        for j in 0..d.ncols() {
            acc += d.column(j).norm_squared() * sig[j] * sig[j];
        }
        acc
    };
    let total = (weighted(&du, &g.sigma_diag[0])
        + weighted(&dv, &g.sigma_diag[1])
        + weighted(&dw, &g.sigma_diag[2])
        + ds.as_slice().iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    let t = rel * g.sigma_min() / total;
    let mut s = f.s.clone();
    for (sv, dv) in s.as_mut_slice().iter_mut().zip(ds.as_slice()) {
        *sv += t * dv;
    }
    FactorQuad::new(
        &f.u + t * du,
        &f.v + t * dv,
        &f.w + t * dw,
        s,
    )
    .unwrap()
}

/// Explicit breve matrices `(W⊗V)M1(S)ᵀ`, `(W⊗U)M2(S)ᵀ`, `(V⊗U)M3(S)ᵀ`.
pub fn breve_explicit(f: &FactorQuad) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let m1 = dmatrix_of(&matricize(&f.s, 1));
    let m2 = dmatrix_of(&matricize(&f.s, 2));
    let m3 = dmatrix_of(&matricize(&f.s, 3));
    (
        f.w.kronecker(&f.v) * m1.transpose(),
        f.w.kronecker(&f.u) * m2.transpose(),
        f.v.kronecker(&f.u) * m3.transpose(),
    )
}

/// Best rank-`r` approximation error found by multi-restart HOOI run to
/// stagnation from random orthonormal starts. Entirely independent of
/// the library's HOSVD path.
pub fn hooi_best_error(x: &Tensor3, r: (usize, usize, usize), restarts: u64, seed: u64) -> f64 {
    let (n1, n2, n3) = x.dims();
    let xnorm = x.norm();
    let mut best = f64::INFINITY;
    for t in 0..restarts {
        let mut u = random_orthonormal(n1, r.0, seed, 0x4001, t + 1);
        let mut v = random_orthonormal(n2, r.1, seed, 0x4002, t + 1);
        let mut w = random_orthonormal(n3, r.2, seed, 0x4003, t + 1);
        let mut prev_err = f64::INFINITY;
        for _ in 0..300 {
            // Mode-1 update: top left singular vectors of M1((I,Vᵀ,Wᵀ)·X).
            u = top_left(
                &multilinear_multiply(&DMatrix::identity(n1, n1), &v.transpose(), &w.transpose(), x)
                    .unwrap(),
                1,
                r.0,
            );
            v = top_left(
                &multilinear_multiply(&u.transpose(), &DMatrix::identity(n2, n2), &w.transpose(), x)
                    .unwrap(),
                2,
                r.1,
            );
            w = top_left(
                &multilinear_multiply(&u.transpose(), &v.transpose(), &DMatrix::identity(n3, n3), x)
                    .unwrap(),
                3,
                r.2,
            );
            let core =
                multilinear_multiply(&u.transpose(), &v.transpose(), &w.transpose(), x).unwrap();
            let recon = multilinear_multiply(&u, &v, &w, &core).unwrap();
            let err = recon.sub(x).unwrap().norm();
            if (prev_err - err).abs() <= 1e-12 * xnorm {
                prev_err = err;
                break;
            }
            prev_err = err;
        }
        best = best.min(prev_err);
    }
    best
}

fn top_left(t: &Tensor3, mode: usize, r: usize) -> DMatrix<f64> {
    let m = dmatrix_of(&matricize(t, mode));
    let svd = m.svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let full = svd.u.unwrap();
    let mut out = DMatrix::zeros(full.nrows(), r);
    for (jj, &j) in order.iter().take(r).enumerate() {
        out.set_column(jj, &full.column(j));
    }
    out
}

/// Gaussian direction with unit overall Frobenius norm for directional
/// derivatives.
pub fn random_direction(f: &FactorQuad, seed: u64) -> GradientBundle {
    let du = random_matrix(f.u.nrows(), f.u.ncols(), seed.wrapping_add(21));
    let dv = random_matrix(f.v.nrows(), f.v.ncols(), seed.wrapping_add(22));
    let dw = random_matrix(f.w.nrows(), f.w.ncols(), seed.wrapping_add(23));
    let ds = random_tensor(f.s.dims(), seed.wrapping_add(24));
    let norm = (du.norm_squared()
        + dv.norm_squared()
        + dw.norm_squared()
        + ds.as_slice().iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    let mut ds_scaled = ds;
    for v in ds_scaled.as_mut_slice() {
        *v /= norm;
    }
    GradientBundle {
        grad_u: du / norm,
        grad_v: dv / norm,
        grad_w: dw / norm,
        grad_s: ds_scaled,
    }
}

pub fn quad_plus_scaled(f: &FactorQuad, d: &GradientBundle, t: f64) -> FactorQuad {
    let mut s = f.s.clone();
    for (sv, dv) in s.as_mut_slice().iter_mut().zip(d.grad_s.as_slice()) {
        *sv += t * dv;
    }
    FactorQuad::new(
        &f.u + t * &d.grad_u,
        &f.v + t * &d.grad_v,
        &f.w + t * &d.grad_w,
        s,
    )
    .unwrap()
}

pub fn bundle_inner(a: &GradientBundle, b: &GradientBundle) -> f64 {
    a.grad_u.dot(&b.grad_u)
        + a.grad_v.dot(&b.grad_v)
        + a.grad_w.dot(&b.grad_w)
        + a.grad_s
            .as_slice()
            .iter()
            .zip(b.grad_s.as_slice())
            .map(|(x, y)| x * y)
            .sum::<f64>()
}

/// Central finite-difference check of `grad` against `loss` along a few
/// random directions; returns the worst relative deviation.
pub fn finite_diff_rel_err(
    f: &FactorQuad,
    grad: &GradientBundle,
    loss: impl Fn(&FactorQuad) -> f64,
    seed: u64,
    directions: u64,
) -> f64 {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for k in 0..directions {
        let dir = random_direction(f, seed.wrapping_add(100 * k));
        let plus = loss(&quad_plus_scaled(f, &dir, h));
        let minus = loss(&quad_plus_scaled(f, &dir, -h));
        let fd = (plus - minus) / (2.0 * h);
        let analytic = bundle_inner(grad, &dir);
        let denom = analytic.abs().max(fd.abs()).max(1e-12);
        worst = worst.max((fd - analytic).abs() / denom);
    }
    worst
}

/// Dense-path oracle for the completion gradients: build the zero-filled
/// residual tensor over Ω and contract it with explicitly materialized
/// breve matrices.
pub fn dense_completion_bundle(f: &FactorQuad, obs: &ObservationSet) -> GradientBundle {
    let xhat = f.reconstruct().unwrap();
    let mut resid = Tensor3::zeros(obs.dims);
    for (idx, &y) in obs.indices.iter().zip(&obs.values) {
        let (i1, i2, i3) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
        resid.set(i1, i2, i3, xhat.get(i1, i2, i3) - y);
    }
    let inv_p = 1.0 / obs.p;
    let (breve_u, breve_v, breve_w) = breve_explicit(f);
    let grad_u = dmatrix_of(&matricize(&resid, 1)) * breve_u * inv_p;
    let grad_v = dmatrix_of(&matricize(&resid, 2)) * breve_v * inv_p;
    let grad_w = dmatrix_of(&matricize(&resid, 3)) * breve_w * inv_p;
    let mut grad_s = multilinear_multiply(
        &f.u.transpose(),
        &f.v.transpose(),
        &f.w.transpose(),
        &resid,
    )
    .unwrap();
    grad_s.scale(inv_p);
    GradientBundle {
        grad_u,
        grad_v,
        grad_w,
        grad_s,
    }
}

/// Dense completion loss `1/(2p) ‖P_Ω(X̂) − Y‖²` from first principles.
pub fn dense_completion_loss(f: &FactorQuad, obs: &ObservationSet) -> f64 {
    let xhat = f.reconstruct().unwrap();
    let mut acc = 0.0;
    for (idx, &y) in obs.indices.iter().zip(&obs.values) {
        let d = xhat.get(idx[0] as usize, idx[1] as usize, idx[2] as usize) - y;
        acc += d * d;
    }
    0.5 * acc / obs.p
}

pub fn bundle_rel_diff(a: &GradientBundle, b: &GradientBundle) -> f64 {
    let num = ((&a.grad_u - &b.grad_u).norm_squared()
        + (&a.grad_v - &b.grad_v).norm_squared()
        + (&a.grad_w - &b.grad_w).norm_squared()
        + a.grad_s
            .as_slice()
            .iter()
            .zip(b.grad_s.as_slice())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>())
    .sqrt();
    let den = (b.grad_u.norm_squared()
        + b.grad_v.norm_squared()
        + b.grad_w.norm_squared()
        + b.grad_s.as_slice().iter().map(|v| v * v).sum::<f64>())
    .sqrt();
    num / den.max(f64::MIN_POSITIVE)
}
