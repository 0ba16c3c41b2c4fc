//! Factor quadruples `F = (U, V, W, S)`: reconstruction, preconditioner
//! Grams, incoherence, scaled projection, scaled distance, and
//! ground-truth generators.
//!
//! The co-factor ("breve") matrices such as `(W ⊗ V) M1(S)ᵀ` are never
//! materialized; everything that needs them goes through their `r × r`
//! Grams or through mode contractions, so all preconditioning work is
//! `O(r^6)` regardless of the ambient dimensions.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::{tag, Stream};
use crate::tensor::{
    self, multilinear_multiply, multilinear_multiply_t, sigma_extremes, singular_values, unfold,
    SigmaReport, Tensor3,
};

/// Tucker factor quadruple. No orthonormality is required of `U, V, W`.
#[derive(Clone, Debug)]
pub struct FactorQuad {
    pub u: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub s: Tensor3,
}

impl FactorQuad {
    pub fn new(u: DMatrix<f64>, v: DMatrix<f64>, w: DMatrix<f64>, s: Tensor3) -> Result<Self> {
        let (r1, r2, r3) = s.dims();
        if u.ncols() != r1 || v.ncols() != r2 || w.ncols() != r3 {
            return Err(Error::DimMismatch(format!(
                "factor columns ({}, {}, {}) do not match core dims {:?}",
                u.ncols(),
                v.ncols(),
                w.ncols(),
                s.dims()
            )));
        }
        let finite = |m: &DMatrix<f64>| m.iter().all(|v| v.is_finite());
        if !finite(&u) || !finite(&v) || !finite(&w) || !s.is_finite() {
            return Err(Error::Parameter("factor quadruple contains non-finite entries".into()));
        }
        Ok(FactorQuad { u, v, w, s })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.u.nrows(), self.v.nrows(), self.w.nrows())
    }

    pub fn ranks(&self) -> (usize, usize, usize) {
        self.s.dims()
    }

    /// `(U, V, W) · S`.
    pub fn reconstruct(&self) -> Result<Tensor3> {
        multilinear_multiply(&self.u, &self.v, &self.w, &self.s)
    }
}

/// Reparameterize by invertible `Q_k`: `(UQ1, VQ2, WQ3, (Q1⁻¹,Q2⁻¹,Q3⁻¹)·S)`.
/// Leaves the reconstructed tensor unchanged.
pub fn reparameterize(
    f: &FactorQuad,
    q1: &DMatrix<f64>,
    q2: &DMatrix<f64>,
    q3: &DMatrix<f64>,
) -> Result<FactorQuad> {
    let q1i = q1
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Parameter("Q1 is singular".into()))?;
    let q2i = q2
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Parameter("Q2 is singular".into()))?;
    let q3i = q3
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Parameter("Q3 is singular".into()))?;
    let s = multilinear_multiply(&q1i, &q2i, &q3i, &f.s)?;
    FactorQuad::new(&f.u * q1, &f.v * q2, &f.w * q3, s)
}

/// The six Grams driving the ScaledGD preconditioners.
#[derive(Clone, Debug)]
pub struct PrecondState {
    /// `M1(S) (WᵀW ⊗ VᵀV) M1(S)ᵀ`, i.e. the Gram of `(W ⊗ V) M1(S)ᵀ`.
    pub gram_breve_u: DMatrix<f64>,
    pub gram_breve_v: DMatrix<f64>,
    pub gram_breve_w: DMatrix<f64>,
    pub gram_u: DMatrix<f64>,
    pub gram_v: DMatrix<f64>,
    pub gram_w: DMatrix<f64>,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]))
}

/// All six Grams; cost `O(r^6)`, independent of the ambient dims.
pub fn factor_grams(f: &FactorQuad) -> PrecondState {
    let gu = symmetrize(f.u.transpose() * &f.u);
    let gv = symmetrize(f.v.transpose() * &f.v);
    let gw = symmetrize(f.w.transpose() * &f.w);
    let m1 = unfold(&f.s, 1);
    let m2 = unfold(&f.s, 2);
    let m3 = unfold(&f.s, 3);
    let breve_u = symmetrize(&m1 * gw.kronecker(&gv) * m1.transpose());
    let breve_v = symmetrize(&m2 * gw.kronecker(&gu) * m2.transpose());
    let breve_w = symmetrize(&m3 * gv.kronecker(&gu) * m3.transpose());
    PrecondState {
        gram_breve_u: breve_u,
        gram_breve_v: breve_v,
        gram_breve_w: breve_w,
        gram_u: gu,
        gram_v: gv,
        gram_w: gw,
    }
}

/// How the ground-truth core is generated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TruthStyle {
    /// i.i.d. standard Gaussian core, rotated into the canonical form
    /// where every mode-k core Gram is diagonal.
    GaussianCore,
    /// Cubic-rank core with singular values equally spaced from `1` to
    /// `1/kappa`, giving condition number exactly `kappa`.
    PrescribedKappa(f64),
}

/// A synthetic ground truth: orthonormal factors in canonical form.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub factors: FactorQuad,
    pub sigma: SigmaReport,
    /// Full per-mode singular-value diagonals of the matricizations,
    /// descending; the `Σ_{*,k}` weights of the scaled distance.
    pub sigma_diag: [Vec<f64>; 3],
    pub mu: f64,
    pub style: TruthStyle,
    pub seed: u64,
    /// Largest relative off-diagonal left in the core Grams after the
    /// canonicalizing rotation (should be below 1e-10).
    pub canon_offdiag: f64,
}

impl GroundTruth {
    pub fn sigma_min(&self) -> f64 {
        self.sigma.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma.sigma_max
    }

    pub fn reconstruct(&self) -> Result<Tensor3> {
        self.factors.reconstruct()
    }

    /// Wrap an existing quadruple with orthonormal factors as a ground
    /// truth, deriving the singular-value data from the core.
    pub fn from_canonical_factors(factors: FactorQuad, seed: u64) -> Result<Self> {
        check_orthonormal(&factors)?;
        let sigma_diag = core_sigma_diag(&factors.s);
        let sigma = report_from_diag(&sigma_diag)?;
        let mu = incoherence_of(&factors.u, &factors.v, &factors.w);
        let canon_offdiag = core_gram_offdiag(&factors.s);
        Ok(GroundTruth {
            factors,
            sigma,
            sigma_diag,
            mu,
            style: TruthStyle::GaussianCore,
            seed,
            canon_offdiag,
        })
    }
}

fn check_orthonormal(f: &FactorQuad) -> Result<()> {
    for (name, m) in [("U", &f.u), ("V", &f.v), ("W", &f.w)] {
        let g = m.transpose() * m;
        let r = g.nrows();
        for i in 0..r {
            for j in 0..r {
                let target = if i == j { 1.0 } else { 0.0 };
                if (g[(i, j)] - target).abs() > 1e-8 {
                    return Err(Error::Parameter(format!(
                        "factor {name} is not orthonormal (Gram deviates by {:.2e})",
                        (g[(i, j)] - target).abs()
                    )));
                }
            }
        }
    }
    Ok(())
}

fn core_sigma_diag(s: &Tensor3) -> [Vec<f64>; 3] {
    [
        singular_values(&unfold(s, 1)),
        singular_values(&unfold(s, 2)),
        singular_values(&unfold(s, 3)),
    ]
}

fn report_from_diag(diag: &[Vec<f64>; 3]) -> Result<SigmaReport> {
    let mut per_mode = [(0.0, 0.0); 3];
    for k in 0..3 {
        let s1 = diag[k][0];
        let sr = *diag[k].last().unwrap();
        if sr <= tensor::SIGMA_REL_CUTOFF * s1 {
            return Err(Error::DegenerateRank {
                mode: k + 1,
                index: diag[k].len(),
                sigma: sr,
            });
        }
        per_mode[k] = (s1, sr);
    }
    let sigma_max = per_mode.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let sigma_min = per_mode.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    Ok(SigmaReport {
        sigma_max,
        sigma_min,
        kappa: sigma_max / sigma_min,
        per_mode,
        tie_at_cut: false,
    })
}

fn core_gram_offdiag(s: &Tensor3) -> f64 {
    let mut worst: f64 = 0.0;
    for mode in 1..=3 {
        let m = unfold(s, mode);
        let g = &m * m.transpose();
        let scale = (0..g.nrows()).map(|i| g[(i, i)]).fold(0.0, f64::max);
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    worst = worst.max(g[(i, j)].abs() / scale.max(f64::MIN_POSITIVE));
                }
            }
        }
    }
    worst
}

/// Seeded orthonormal matrix: QR of an i.i.d. Gaussian draw, with the
/// sign of each column fixed by the R diagonal.
pub fn random_orthonormal(n: usize, r: usize, seed: u64, purpose: u64, stream: u64) -> DMatrix<f64> {
    let stream = Stream::new(seed, purpose, stream);
    let g = DMatrix::from_fn(n, r, |i, j| stream.normal_at((i + j * n) as u64));
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..r {
        if rmat[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Build a synthetic ground truth per `style`.
pub fn make_ground_truth(
    n: (usize, usize, usize),
    r: (usize, usize, usize),
    style: TruthStyle,
    seed: u64,
) -> Result<GroundTruth> {
    if r.0 > n.0 || r.1 > n.1 || r.2 > n.2 || r.0 == 0 || r.1 == 0 || r.2 == 0 {
        return Err(Error::Rank(format!("rank {r:?} out of range for dims {n:?}")));
    }
    let mut u = random_orthonormal(n.0, r.0, seed, tag::GT_FACTOR_U, 0);
    let mut v = random_orthonormal(n.1, r.1, seed, tag::GT_FACTOR_V, 0);
    let mut w = random_orthonormal(n.2, r.2, seed, tag::GT_FACTOR_W, 0);

    let (core, canon_offdiag) = match style {
        TruthStyle::PrescribedKappa(kappa) => {
            if !(r.0 == r.1 && r.1 == r.2) {
                return Err(Error::Parameter(
                    "prescribed-kappa cores require a cubic rank".into(),
                ));
            }
            if kappa < 1.0 {
                return Err(Error::Parameter("kappa must be at least 1".into()));
            }
            let rr = r.0;
            if rr == 1 && kappa != 1.0 {
                return Err(Error::Parameter(
                    "rank (1,1,1) admits only kappa = 1".into(),
                ));
            }
            let mut core = Tensor3::zeros((rr, rr, rr));
            let sqrt_r = (rr as f64).sqrt();
            for j1 in 0..rr {
                let sig = if rr == 1 {
                    1.0
                } else {
                    1.0 - (j1 as f64) * (1.0 - 1.0 / kappa) / (rr as f64 - 1.0)
                };
                for j2 in 0..rr {
                    for j3 in 0..rr {
                        // 1-based index sum divisible by r
                        if (j1 + j2 + j3 + 3) % rr == 0 {
                            core.set(j1, j2, j3, sig / sqrt_r);
                        }
                    }
                }
            }
            let off = core_gram_offdiag(&core);
            (core, off)
        }
        TruthStyle::GaussianCore => {
            let stream = Stream::new(seed, tag::GT_CORE, 0);
            let mut core = Tensor3::zeros(r);
            for (i, val) in core.as_mut_slice().iter_mut().enumerate() {
                *val = stream.normal_at(i as u64);
            }
            // Absorb per-mode left singular vectors into the factors so
            // that every mode-k core Gram becomes diagonal. One pass is
            // exact in theory (orthogonal rotations in other modes leave
            // a mode's Gram untouched); extra passes only polish
            // round-off.
            let mut off = f64::INFINITY;
            for _ in 0..3 {
                for mode in 1..=3 {
                    let m = unfold(&core, mode);
                    let rk = m.nrows();
                    let (p, _) = tensor::top_left_singular(&m, rk)?;
                    core = tensor::mode_product(&core, &p.transpose(), mode)?;
                    match mode {
                        1 => u = &u * &p,
                        2 => v = &v * &p,
                        _ => w = &w * &p,
                    }
                }
                off = core_gram_offdiag(&core);
                if off < 1e-10 {
                    break;
                }
            }
            (core, off)
        }
    };

    let factors = FactorQuad::new(u, v, w, core)?;
    let sigma_diag = core_sigma_diag(&factors.s);
    let sigma = report_from_diag(&sigma_diag)?;
    let mu = incoherence_of(&factors.u, &factors.v, &factors.w);
    Ok(GroundTruth {
        factors,
        sigma,
        sigma_diag,
        mu,
        style,
        seed,
        canon_offdiag,
    })
}

fn incoherence_of(u: &DMatrix<f64>, v: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let spike = |m: &DMatrix<f64>| {
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            let rn: f64 = (0..m.ncols()).map(|j| m[(i, j)] * m[(i, j)]).sum();
            worst = worst.max(rn);
        }
        worst * m.nrows() as f64 / m.ncols() as f64
    };
    spike(u).max(spike(v)).max(spike(w))
}

/// Incoherence parameter `µ` of an orthonormal ground truth.
pub fn incoherence(g: &GroundTruth) -> Result<f64> {
    check_orthonormal(&g.factors)?;
    Ok(incoherence_of(&g.factors.u, &g.factors.v, &g.factors.w))
}

/// Row-wise scaled projection: shrink rows of each factor so that
/// `√n_k · ‖row · breveᵀ‖₂ ≤ B`; the core is untouched. Row norms are
/// evaluated through the breve Grams.
pub fn scaled_projection(f: &FactorQuad, b: f64) -> Result<FactorQuad> {
    if b <= 0.0 {
        return Err(Error::Parameter(format!("projection radius must be positive, got {b}")));
    }
    let grams = factor_grams(f);
    let project = |m: &DMatrix<f64>, gram: &DMatrix<f64>| -> DMatrix<f64> {
        let n = m.nrows() as f64;
        let mg = m * gram;
        let mut out = m.clone();
        for i in 0..m.nrows() {
            let norm2: f64 = (0..m.ncols()).map(|j| m[(i, j)] * mg[(i, j)]).sum();
            let norm = norm2.max(0.0).sqrt();
            let denom = n.sqrt() * norm;
            if denom > b {
                let scale = b / denom;
                for j in 0..m.ncols() {
                    out[(i, j)] *= scale;
                }
            }
        }
        out
    };
    FactorQuad::new(
        project(&f.u, &grams.gram_breve_u),
        project(&f.v, &grams.gram_breve_v),
        project(&f.w, &grams.gram_breve_w),
        f.s.clone(),
    )
}

/// Scaled row norms `√n_k ‖row · breveᵀ‖₂` of each factor (max per mode);
/// the quantity bounded by the scaled projection.
pub fn scaled_row_norms(f: &FactorQuad) -> [f64; 3] {
    let grams = factor_grams(f);
    let worst = |m: &DMatrix<f64>, gram: &DMatrix<f64>| -> f64 {
        let mg = m * gram;
        let mut w: f64 = 0.0;
        for i in 0..m.nrows() {
            let norm2: f64 = (0..m.ncols()).map(|j| m[(i, j)] * mg[(i, j)]).sum();
            w = w.max(norm2.max(0.0).sqrt());
        }
        w * (m.nrows() as f64).sqrt()
    };
    [
        worst(&f.u, &grams.gram_breve_u),
        worst(&f.v, &grams.gram_breve_v),
        worst(&f.w, &grams.gram_breve_w),
    ]
}

/// Result of the scaled-distance alignment solve.
#[derive(Clone, Debug)]
pub struct DistReport {
    /// Achieved value of the alignment objective (an upper bound on the
    /// true infimum).
    pub dist: f64,
    pub aligners: [DMatrix<f64>; 3],
    /// Stationarity residual of the alignment conditions, relative to
    /// `σ_max²`.
    pub residual: f64,
    /// `‖reconstruct(F) − X*‖_F / ‖X*‖_F`.
    pub rel_fro: f64,
    /// Residual reached the 1e-8 target.
    pub converged: bool,
}

const ALIGN_RESIDUAL_TOL: f64 = 1e-8;
const ALIGN_MAX_SWEEPS: usize = 200;
const ALIGN_DAMPING: f64 = 0.5;

struct AlignWork {
    q: [DMatrix<f64>; 3],
}

impl AlignWork {
    fn objective(&self, f: &FactorQuad, g: &GroundTruth, sig: &[DVector<f64>; 3]) -> Option<f64> {
        let qinv: Vec<DMatrix<f64>> = (0..3)
            .map(|k| self.q[k].clone().try_inverse())
            .collect::<Option<Vec<_>>>()?;
        let s_tilde = multilinear_multiply(&qinv[0], &qinv[1], &qinv[2], &f.s).ok()?;
        let mut total = 0.0;
        for (k, (m, mstar)) in [(&f.u, &g.factors.u), (&f.v, &g.factors.v), (&f.w, &g.factors.w)]
            .into_iter()
            .enumerate()
        {
            let d = m * &self.q[k] - mstar;
            for j in 0..d.ncols() {
                let s = sig[k][j];
                total += d.column(j).norm_squared() * s * s;
            }
        }
        let ds = s_tilde.sub(&g.factors.s).ok()?;
        total += ds.as_slice().iter().map(|v| v * v).sum::<f64>();
        Some(total)
    }
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = m.nrows();
    if let Some(chol) = m.clone().cholesky() {
        return Some(chol.solve(&DMatrix::identity(r, r)));
    }
    let jitter = 1e-12 * m.trace() / r as f64;
    let jittered = m + DMatrix::from_diagonal_element(r, r, jitter.max(f64::MIN_POSITIVE));
    jittered.cholesky().map(|c| c.solve(&DMatrix::identity(r, r)))
}

/// Minimize the scaled-distance objective over invertible aligners by a
/// damped fixed-point iteration on its stationarity conditions, starting
/// from per-mode least squares. Never panics; a run that fails to reach
/// the residual target reports `converged = false`.
pub fn scaled_distance(f: &FactorQuad, g: &GroundTruth) -> Result<DistReport> {
    if f.dims() != g.factors.dims() || f.ranks() != g.factors.ranks() {
        return Err(Error::DimMismatch(format!(
            "quad {:?}/{:?} vs truth {:?}/{:?}",
            f.dims(),
            f.ranks(),
            g.factors.dims(),
            g.factors.ranks()
        )));
    }
    let sig: [DVector<f64>; 3] = [
        DVector::from_vec(g.sigma_diag[0].clone()),
        DVector::from_vec(g.sigma_diag[1].clone()),
        DVector::from_vec(g.sigma_diag[2].clone()),
    ];
    let sigma_max = g.sigma.sigma_max;

    // rel_fro is independent of the aligners.
    let xhat = f.reconstruct()?;
    let xstar = g.reconstruct()?;
    let xnorm = xstar.norm();
    let rel_fro = xhat.sub(&xstar)?.norm() / xnorm;

    // Least-squares warm start: Q_k = (M_kᵀ M_k)⁻¹ M_kᵀ M_k*.
    let ls_init = |m: &DMatrix<f64>, mstar: &DMatrix<f64>| -> DMatrix<f64> {
        match spd_inverse(&(m.transpose() * m)) {
            Some(inv) => inv * m.transpose() * mstar,
            None => DMatrix::identity(m.ncols(), m.ncols()),
        }
    };
    let mut work = AlignWork {
        q: [
            ls_init(&f.u, &g.factors.u),
            ls_init(&f.v, &g.factors.v),
            ls_init(&f.w, &g.factors.w),
        ],
    };

    let gram_inv = [
        spd_inverse(&(f.u.transpose() * &f.u)),
        spd_inverse(&(f.v.transpose() * &f.v)),
        spd_inverse(&(f.w.transpose() * &f.w)),
    ];
    if gram_inv.iter().any(|g| g.is_none()) {
        // Degenerate factors: report the warm-start objective as-is.
        let obj = work.objective(f, g, &sig).unwrap_or(f64::INFINITY);
        return Ok(DistReport {
            dist: obj.max(0.0).sqrt(),
            aligners: work.q,
            residual: f64::INFINITY,
            rel_fro,
            converged: false,
        });
    }
    let gram_inv: Vec<DMatrix<f64>> = gram_inv.into_iter().map(|g| g.unwrap()).collect();
    let sig_inv2: Vec<DVector<f64>> = sig
        .iter()
        .map(|s| DVector::from_iterator(s.len(), s.iter().map(|v| 1.0 / (v * v))))
        .collect();

    let mut best_obj = match work.objective(f, g, &sig) {
        Some(o) => o,
        None => f64::INFINITY,
    };
    let mut best_q = work.q.clone();
    let mut residual = f64::INFINITY;
    let mut damping = ALIGN_DAMPING;
    let factors = [&f.u, &f.v, &f.w];
    let truth_factors = [&g.factors.u, &g.factors.v, &g.factors.w];

    for _ in 0..ALIGN_MAX_SWEEPS {
        let prev_q = work.q.clone();
        let prev_obj = work.objective(f, g, &sig).unwrap_or(f64::INFINITY);
        let mut grad_sq = 0.0;
        let mut singular = false;

        for k in 0..3 {
            let qinv: Vec<DMatrix<f64>> = match (0..3)
                .map(|j| work.q[j].clone().try_inverse())
                .collect::<Option<Vec<_>>>()
            {
                Some(qi) => qi,
                None => {
                    singular = true;
                    break;
                }
            };
            let s_tilde = multilinear_multiply(&qinv[0], &qinv[1], &qinv[2], &f.s)?;
            let m_tilde = unfold(&s_tilde, k + 1);
            let m_star = unfold(&g.factors.s, k + 1);
            // Gradient of the objective in Q_k (Lemma-type stationarity):
            // Mᵀ(MQ_k − M*)Σ_k² − Q_k⁻ᵀ (M_k(S̃) − M_k(S*)) M_k(S̃)ᵀ.
            let d = factors[k] * &work.q[k] - truth_factors[k];
            let mut term1 = factors[k].transpose() * d;
            for j in 0..term1.ncols() {
                let s2 = sig[k][j] * sig[k][j];
                for i in 0..term1.nrows() {
                    term1[(i, j)] *= s2;
                }
            }
            let term2 = qinv[k].transpose() * (&m_tilde - &m_star) * m_tilde.transpose();
            let grad = term1 - term2;
            grad_sq += grad.norm_squared();
            // Damped preconditioned step.
            let mut step = &gram_inv[k] * grad;
            for j in 0..step.ncols() {
                let si2 = sig_inv2[k][j];
                for i in 0..step.nrows() {
                    step[(i, j)] *= si2;
                }
            }
            work.q[k] -= damping * step;
        }

        if singular {
            work.q = prev_q;
            break;
        }
        residual = grad_sq.sqrt() / (sigma_max * sigma_max);
        let obj = work.objective(f, g, &sig).unwrap_or(f64::INFINITY);
        if obj < best_obj {
            best_obj = obj;
            best_q = work.q.clone();
        }
        if residual <= ALIGN_RESIDUAL_TOL {
            break;
        }
        if obj > prev_obj {
            // Overshot; back off.
            work.q = prev_q;
            damping *= 0.5;
            if damping < 1e-3 {
                break;
            }
        }
    }

    Ok(DistReport {
        dist: best_obj.max(0.0).sqrt(),
        aligners: best_q,
        residual,
        rel_fro,
        converged: residual <= ALIGN_RESIDUAL_TOL,
    })
}

/// `(U*ᵀ, V*ᵀ, W*ᵀ) · X` — project a dense tensor onto the truth factors.
pub fn project_onto_factors(g: &GroundTruth, x: &Tensor3) -> Result<Tensor3> {
    multilinear_multiply_t(&g.factors.u, &g.factors.v, &g.factors.w, x)
}

/// Sanity wrapper: `sigma_extremes` of the reconstructed truth.
pub fn truth_sigma_extremes(g: &GroundTruth) -> Result<SigmaReport> {
    sigma_extremes(&g.reconstruct()?, g.factors.ranks())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factors_reconstruct_core() {
        let s = Tensor3::from_fn((2, 2, 2), |a, b, c| (a + 2 * b + 4 * c) as f64);
        let f = FactorQuad::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            s.clone(),
        )
        .unwrap();
        assert_eq!(f.reconstruct().unwrap().as_slice(), s.as_slice());
    }

    #[test]
    fn orthonormal_truth_preserves_core_norm() {
        let g = make_ground_truth((8, 7, 6), (3, 2, 2), TruthStyle::GaussianCore, 11).unwrap();
        let x = g.reconstruct().unwrap();
        let snorm = g.factors.s.norm();
        assert!((x.norm() - snorm).abs() <= 1e-10 * snorm);
    }

    #[test]
    fn prescribed_kappa_one_has_unit_sigmas() {
        let g = make_ground_truth((10, 10, 10), (5, 5, 5), TruthStyle::PrescribedKappa(1.0), 3)
            .unwrap();
        assert!((g.sigma.sigma_max - 1.0).abs() < 1e-10);
        assert!((g.sigma.sigma_min - 1.0).abs() < 1e-10);
    }

    #[test]
    fn prescribed_kappa_rejects_non_cubic_rank() {
        assert!(make_ground_truth((10, 10, 10), (5, 4, 5), TruthStyle::PrescribedKappa(2.0), 3)
            .is_err());
    }

    #[test]
    fn zero_core_gives_zero_breve_grams() {
        let g = make_ground_truth((6, 6, 6), (2, 2, 2), TruthStyle::GaussianCore, 1).unwrap();
        let zero_core = Tensor3::zeros((2, 2, 2));
        let f = FactorQuad::new(
            g.factors.u.clone(),
            g.factors.v.clone(),
            g.factors.w.clone(),
            zero_core,
        )
        .unwrap();
        let grams = factor_grams(&f);
        assert!(grams.gram_breve_u.iter().all(|&v| v == 0.0));
        assert!(grams.gram_breve_v.iter().all(|&v| v == 0.0));
        assert!(grams.gram_breve_w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn incoherence_of_standard_basis_factors() {
        let mut u = DMatrix::zeros(4, 2);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        let mut core = Tensor3::zeros((2, 2, 2));
        core.set(0, 0, 0, 2.0);
        core.set(1, 1, 1, 1.0);
        let f = FactorQuad::new(u.clone(), u.clone(), u.clone(), core).unwrap();
        let g = GroundTruth::from_canonical_factors(f, 0).unwrap();
        let mu = incoherence(&g).unwrap();
        assert!((mu - 2.0).abs() < 1e-12);
    }

    #[test]
    fn incoherence_rejects_non_orthonormal_factors() {
        let g = make_ground_truth((6, 6, 6), (2, 2, 2), TruthStyle::GaussianCore, 5).unwrap();
        let mut bad = g.clone();
        bad.factors.u[(0, 0)] += 0.5;
        assert!(incoherence(&bad).is_err());
    }

    #[test]
    fn incoherence_at_least_one() {
        for seed in 0..5 {
            let g = make_ground_truth((20, 15, 10), (3, 3, 2), TruthStyle::GaussianCore, seed)
                .unwrap();
            assert!(incoherence(&g).unwrap() >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn scaled_projection_is_noop_on_interior_points() {
        let g = make_ground_truth((8, 8, 8), (2, 2, 2), TruthStyle::GaussianCore, 7).unwrap();
        let worst = scaled_row_norms(&g.factors).into_iter().fold(0.0, f64::max);
        let out = scaled_projection(&g.factors, worst * 1.01).unwrap();
        assert_eq!(out.u, g.factors.u);
        assert_eq!(out.v, g.factors.v);
        assert_eq!(out.w, g.factors.w);
    }

    #[test]
    fn scaled_projection_rejects_nonpositive_radius() {
        let g = make_ground_truth((4, 4, 4), (2, 2, 2), TruthStyle::GaussianCore, 2).unwrap();
        assert!(scaled_projection(&g.factors, 0.0).is_err());
    }

    #[test]
    fn scaled_distance_zero_at_truth() {
        let g = make_ground_truth((7, 6, 5), (2, 2, 2), TruthStyle::GaussianCore, 9).unwrap();
        let rep = scaled_distance(&g.factors, &g).unwrap();
        assert!(rep.dist <= 1e-10 * g.sigma_min(), "dist = {}", rep.dist);
        for q in &rep.aligners {
            let r = q.nrows();
            let dev = (q - DMatrix::<f64>::identity(r, r)).norm();
            assert!(dev <= 1e-8, "aligner deviates from identity by {dev}");
        }
    }
}
