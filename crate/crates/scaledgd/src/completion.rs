//! Tensor completion under the Bernoulli observation model: sampling,
//! sparse loss/gradients, spectral initialization from diagonal-deleted
//! Grams, and the projected ScaledGD / plain GD solvers.
//!
//! Gradients never materialize an `n1·n2·n3` intermediate: every observed
//! entry contributes `O(r1·r2·r3)` work through contractions of the core
//! with the three factor rows it touches. Entries are processed in fixed
//! 8192-entry chunks whose partial sums are merged in chunk order, so
//! results are bitwise reproducible regardless of thread count.

use rayon::prelude::*;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factors::{scaled_projection, FactorQuad};
use crate::rng::{tag, Stream};
use crate::solver::{
    drive, GradientBundle, SolverParams, StepRule, Trajectory, TruthInfo,
};
use crate::tensor::{sym_eig_desc, Tensor3};

const CHUNK: usize = 8192;

/// Index set produced by Bernoulli sampling; remembers its seed so that
/// observation noise can be drawn reproducibly later.
#[derive(Clone, Debug)]
pub struct ObservationMask {
    pub dims: (usize, usize, usize),
    pub p: f64,
    pub seed: u64,
    /// 0-based triples, strictly sorted lexicographically.
    pub indices: Vec<[u32; 3]>,
}

/// Observed entries with values, sorted and unique.
#[derive(Clone, Debug)]
pub struct ObservationSet {
    pub dims: (usize, usize, usize),
    pub indices: Vec<[u32; 3]>,
    pub values: Vec<f64>,
    /// Sampling probability used by the estimator (generative or
    /// estimated as `|Ω| / (n1·n2·n3)`).
    pub p: f64,
}

impl ObservationSet {
    pub fn new(
        dims: (usize, usize, usize),
        indices: Vec<[u32; 3]>,
        values: Vec<f64>,
        p: f64,
    ) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimMismatch(format!(
                "{} indices vs {} values",
                indices.len(),
                values.len()
            )));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Parameter(format!("p must be in (0, 1], got {p}")));
        }
        let (n1, n2, n3) = dims;
        for pair in indices.windows(2) {
            if pair[0] >= pair[1] {
                return Err(Error::Parameter(
                    "observation indices must be strictly sorted".into(),
                ));
            }
        }
        for idx in &indices {
            if idx[0] as usize >= n1 || idx[1] as usize >= n2 || idx[2] as usize >= n3 {
                return Err(Error::Parameter(format!(
                    "index {idx:?} out of bounds for dims {dims:?}"
                )));
            }
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("observation values must be finite".into()));
        }
        Ok(ObservationSet {
            dims,
            indices,
            values,
            p,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fraction of entries actually observed.
    pub fn estimated_p(&self) -> f64 {
        let (n1, n2, n3) = self.dims;
        self.indices.len() as f64 / (n1 * n2 * n3) as f64
    }

    /// Same observations with `p` replaced by the empirical rate.
    pub fn with_estimated_p(&self) -> Result<ObservationSet> {
        let mut out = self.clone();
        out.p = self.estimated_p();
        if out.p <= 0.0 {
            return Err(Error::Parameter("empty observation set".into()));
        }
        Ok(out)
    }
}

/// Draw a Bernoulli(p) mask over all index triples; deterministic per
/// seed, indices emitted in lexicographic order.
pub fn sample_mask(dims: (usize, usize, usize), p: f64, seed: u64) -> Result<ObservationMask> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Parameter(format!("p must be in (0, 1], got {p}")));
    }
    let (n1, n2, n3) = dims;
    let stream = Stream::new(seed, tag::MASK, 0);
    let mut indices = Vec::with_capacity(((n1 * n2 * n3) as f64 * p * 1.05) as usize + 16);
    let mut counter = 0u64;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            for i3 in 0..n3 {
                if stream.uniform_at(counter) < p {
                    indices.push([i1 as u32, i2 as u32, i3 as u32]);
                }
                counter += 1;
            }
        }
    }
    Ok(ObservationMask {
        dims,
        p,
        seed,
        indices,
    })
}

/// Noise level from an SNR in dB: `SNR = 10·log10(‖X‖²_F / (N·σ_w²))`
/// with `N = n1·n2·n3`.
pub fn sigma_w_from_snr_db(x: &Tensor3, snr_db: f64) -> f64 {
    let (n1, n2, n3) = x.dims();
    let total = (n1 * n2 * n3) as f64;
    let power = x.norm().powi(2) / total;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}

/// Evaluate the truth at the mask, optionally adding i.i.d. Gaussian
/// noise of standard deviation `noise_sigma`.
pub fn observe(x: &Tensor3, mask: &ObservationMask, noise_sigma: f64) -> Result<ObservationSet> {
    if x.dims() != mask.dims {
        return Err(Error::DimMismatch(format!(
            "tensor dims {:?} vs mask dims {:?}",
            x.dims(),
            mask.dims
        )));
    }
    if noise_sigma < 0.0 {
        return Err(Error::Parameter("noise_sigma must be non-negative".into()));
    }
    let (_, n2, n3) = mask.dims;
    let noise = Stream::new(mask.seed, tag::NOISE, 0);
    let values = mask
        .indices
        .iter()
        .map(|idx| {
            let (i1, i2, i3) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
            let mut v = x.get(i1, i2, i3);
            if noise_sigma > 0.0 {
                // Counter = lexicographic position in the full grid, so a
                // given entry always receives the same noise draw.
                let counter = (i3 + n3 * (i2 + n2 * i1)) as u64;
                v += noise_sigma * noise.normal_at(counter);
            }
            v
        })
        .collect();
    ObservationSet::new(mask.dims, mask.indices.clone(), values, mask.p)
}

/// Row-contiguous copies of the factors for the per-entry kernels.
struct RowMajorFactors {
    r1: usize,
    r2: usize,
    r3: usize,
    ut: Vec<f64>,
    vt: Vec<f64>,
    wt: Vec<f64>,
}

impl RowMajorFactors {
    fn new(f: &FactorQuad) -> Self {
        let transpose = |m: &DMatrix<f64>| {
            let (n, r) = (m.nrows(), m.ncols());
            let mut out = vec![0.0; n * r];
            for i in 0..n {
                for j in 0..r {
                    out[i * r + j] = m[(i, j)];
                }
            }
            out
        };
        let (r1, r2, r3) = f.s.dims();
        RowMajorFactors {
            r1,
            r2,
            r3,
            ut: transpose(&f.u),
            vt: transpose(&f.v),
            wt: transpose(&f.w),
        }
    }
}

/// Predicted entry `⟨S, u_{i1} ⊗ v_{i2} ⊗ w_{i3}⟩` with a per-`i1` cache
/// of `U(i1,:)·M1(S)`; observations are sorted, so rows arrive in runs.
struct PredictState {
    cache: Vec<f64>,
    cached_i1: Option<u32>,
    use_cache: bool,
}

impl PredictState {
    fn new(r2r3: usize, use_cache: bool) -> Self {
        PredictState {
            cache: vec![0.0; r2r3],
            cached_i1: None,
            use_cache,
        }
    }

    #[inline]
    fn refresh(&mut self, fac: &RowMajorFactors, s: &[f64], i1: u32) {
        if self.cached_i1 == Some(i1) {
            return;
        }
        let (r1, r2, r3) = (fac.r1, fac.r2, fac.r3);
        let u = &fac.ut[i1 as usize * r1..][..r1];
        for j23 in 0..r2 * r3 {
            let slice = &s[j23 * r1..][..r1];
            let mut acc = 0.0;
            for j1 in 0..r1 {
                acc += u[j1] * slice[j1];
            }
            self.cache[j23] = acc;
        }
        self.cached_i1 = Some(i1);
    }

    /// Predicted value; `du[j23]` contributions available via closure-free
    /// second pass when needed.
    #[inline]
    fn predict(&mut self, fac: &RowMajorFactors, s: &[f64], idx: &[u32; 3]) -> f64 {
        let (r1, r2, r3) = (fac.r1, fac.r2, fac.r3);
        let v = &fac.vt[idx[1] as usize * r2..][..r2];
        let w = &fac.wt[idx[2] as usize * r3..][..r3];
        if self.use_cache {
            self.refresh(fac, s, idx[0]);
            let mut pred = 0.0;
            for j3 in 0..r3 {
                let wj = w[j3];
                for j2 in 0..r2 {
                    pred += v[j2] * wj * self.cache[j2 + j3 * r2];
                }
            }
            pred
        } else {
            let u = &fac.ut[idx[0] as usize * r1..][..r1];
            let mut pred = 0.0;
            for j3 in 0..r3 {
                let wj = w[j3];
                for j2 in 0..r2 {
                    let vw = v[j2] * wj;
                    let slice = &s[(j2 + j3 * r2) * r1..][..r1];
                    let mut du = 0.0;
                    for j1 in 0..r1 {
                        du += u[j1] * slice[j1];
                    }
                    pred += vw * du;
                }
            }
            pred
        }
    }
}

/// `P_Ω((U,V,W)·S) − Y` as a value per observed entry, in index order.
pub fn sparse_residual(f: &FactorQuad, obs: &ObservationSet) -> Result<Vec<f64>> {
    if f.dims() != obs.dims {
        return Err(Error::DimMismatch(format!(
            "quad dims {:?} vs observations {:?}",
            f.dims(),
            obs.dims
        )));
    }
    let fac = RowMajorFactors::new(f);
    let s = f.s.as_slice();
    let use_cache = obs.len() > f.u.nrows() * fac.r2 * fac.r3;
    let mut out = vec![0.0; obs.len()];
    out.par_chunks_mut(CHUNK)
        .zip(obs.indices.par_chunks(CHUNK).zip(obs.values.par_chunks(CHUNK)))
        .for_each(|(res, (idx, vals))| {
            let mut state = PredictState::new(fac.r2 * fac.r3, use_cache);
            for ((r, i), &y) in res.iter_mut().zip(idx).zip(vals) {
                *r = state.predict(&fac, s, i) - y;
            }
        });
    Ok(out)
}

struct PartialGrad {
    gu: Vec<f64>,
    gv: Vec<f64>,
    gw: Vec<f64>,
    gs: Vec<f64>,
    loss_sq: f64,
}

/// Gradients of `1/(2p)·‖P_Ω((U,V,W)·S) − Y‖²` plus the loss value.
pub(crate) fn completion_gradients_with_loss(
    f: &FactorQuad,
    obs: &ObservationSet,
) -> Result<(GradientBundle, f64)> {
    if f.dims() != obs.dims {
        return Err(Error::DimMismatch(format!(
            "quad dims {:?} vs observations {:?}",
            f.dims(),
            obs.dims
        )));
    }
    let (n1, n2, n3) = f.dims();
    let fac = RowMajorFactors::new(f);
    let (r1, r2, r3) = (fac.r1, fac.r2, fac.r3);
    let s = f.s.as_slice();
    let inv_p = 1.0 / obs.p;
    let use_cache = obs.len() > n1 * r2 * r3;

    let partials: Vec<PartialGrad> = obs
        .indices
        .par_chunks(CHUNK)
        .zip(obs.values.par_chunks(CHUNK))
        .map(|(idx_chunk, val_chunk)| {
            let mut part = PartialGrad {
                gu: vec![0.0; n1 * r1],
                gv: vec![0.0; n2 * r2],
                gw: vec![0.0; n3 * r3],
                gs: vec![0.0; r1 * r2 * r3],
                loss_sq: 0.0,
            };
            let mut state = PredictState::new(r2 * r3, use_cache);
            let mut a = vec![0.0; r1];
            let mut b = vec![0.0; r2];
            let mut d = vec![0.0; r3];
            for (idx, &y) in idx_chunk.iter().zip(val_chunk) {
                let (i1, i2, i3) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
                let u = &fac.ut[i1 * r1..][..r1];
                let v = &fac.vt[i2 * r2..][..r2];
                let w = &fac.wt[i3 * r3..][..r3];
                a.iter_mut().for_each(|x| *x = 0.0);
                b.iter_mut().for_each(|x| *x = 0.0);
                d.iter_mut().for_each(|x| *x = 0.0);
                let mut pred = 0.0;
                if use_cache {
                    state.refresh(&fac, s, idx[0]);
                }
                for j3 in 0..r3 {
                    let wj = w[j3];
                    let mut dj = 0.0;
                    for j2 in 0..r2 {
                        let vj = v[j2];
                        let vw = vj * wj;
                        let j23 = j2 + j3 * r2;
                        let slice = &s[j23 * r1..][..r1];
                        let du = if use_cache {
                            state.cache[j23]
                        } else {
                            let mut acc = 0.0;
                            for j1 in 0..r1 {
                                acc += u[j1] * slice[j1];
                            }
                            acc
                        };
                        pred += vw * du;
                        b[j2] += wj * du;
                        dj += vj * du;
                        for j1 in 0..r1 {
                            a[j1] += vw * slice[j1];
                        }
                    }
                    d[j3] += dj;
                }
                let resid = pred - y;
                part.loss_sq += resid * resid;
                let c = resid * inv_p;
                let gu = &mut part.gu[i1 * r1..][..r1];
                for j1 in 0..r1 {
                    gu[j1] += c * a[j1];
                }
                let gv = &mut part.gv[i2 * r2..][..r2];
                for j2 in 0..r2 {
                    gv[j2] += c * b[j2];
                }
                let gw = &mut part.gw[i3 * r3..][..r3];
                for j3 in 0..r3 {
                    gw[j3] += c * d[j3];
                }
                for j3 in 0..r3 {
                    let cw = c * w[j3];
                    for j2 in 0..r2 {
                        let cvw = cw * v[j2];
                        let gs = &mut part.gs[(j2 + j3 * r2) * r1..][..r1];
                        for j1 in 0..r1 {
                            gs[j1] += cvw * u[j1];
                        }
                    }
                }
            }
            part
        })
        .collect();

    // Fixed-order merge keeps results identical across thread counts.
    let mut gu = vec![0.0; n1 * r1];
    let mut gv = vec![0.0; n2 * r2];
    let mut gw = vec![0.0; n3 * r3];
    let mut gs = vec![0.0; r1 * r2 * r3];
    let mut loss_sq = 0.0;
    for part in partials {
        for (acc, x) in gu.iter_mut().zip(&part.gu) {
            *acc += x;
        }
        for (acc, x) in gv.iter_mut().zip(&part.gv) {
            *acc += x;
        }
        for (acc, x) in gw.iter_mut().zip(&part.gw) {
            *acc += x;
        }
        for (acc, x) in gs.iter_mut().zip(&part.gs) {
            *acc += x;
        }
        loss_sq += part.loss_sq;
    }

    let grad_u = DMatrix::from_fn(n1, r1, |i, j| gu[i * r1 + j]);
    let grad_v = DMatrix::from_fn(n2, r2, |i, j| gv[i * r2 + j]);
    let grad_w = DMatrix::from_fn(n3, r3, |i, j| gw[i * r3 + j]);
    let grad_s = Tensor3::from_data((r1, r2, r3), gs)?;
    Ok((
        GradientBundle {
            grad_u,
            grad_v,
            grad_w,
            grad_s,
        },
        0.5 * inv_p * loss_sq,
    ))
}

/// Gradients of the completion loss.
pub fn completion_gradients(f: &FactorQuad, obs: &ObservationSet) -> Result<GradientBundle> {
    completion_gradients_with_loss(f, obs).map(|(g, _)| g)
}

/// Top-r eigenvectors of the diagonal-deleted Gram of the scaled
/// matricized observations, per mode; the core by a sparse contraction.
pub fn spectral_init_completion(
    obs: &ObservationSet,
    r: (usize, usize, usize),
    projection_b: Option<f64>,
) -> Result<FactorQuad> {
    let (n1, n2, n3) = obs.dims;
    let ranks = [r.0, r.1, r.2];
    let sizes = [n1, n2, n3];
    for k in 0..3 {
        if ranks[k] == 0 || ranks[k] > sizes[k] {
            return Err(Error::Rank(format!(
                "mode-{} rank {} out of range for dims {:?}",
                k + 1,
                ranks[k],
                obs.dims
            )));
        }
    }
    let inv_p2 = 1.0 / (obs.p * obs.p);

    let mut factors: Vec<DMatrix<f64>> = Vec::with_capacity(3);
    for mode in 0..3 {
        let nk = sizes[mode];
        let ncols = match mode {
            0 => n2 * n3,
            1 => n1 * n3,
            _ => n1 * n2,
        };
        // Counting sort of the entries by matricization column.
        let col_of = |idx: &[u32; 3]| -> usize {
            let (i1, i2, i3) = (idx[0] as usize, idx[1] as usize, idx[2] as usize);
            match mode {
                0 => i2 + i3 * n2,
                1 => i1 + i3 * n1,
                _ => i1 + i2 * n1,
            }
        };
        let row_of = |idx: &[u32; 3]| idx[mode] as usize;
        let mut counts = vec![0u32; ncols + 1];
        for idx in &obs.indices {
            counts[col_of(idx) + 1] += 1;
        }
        for c in 0..ncols {
            counts[c + 1] += counts[c];
        }
        let mut rows = vec![0u32; obs.len()];
        let mut vals = vec![0.0f64; obs.len()];
        let mut cursor = counts.clone();
        for (idx, &v) in obs.indices.iter().zip(&obs.values) {
            let c = col_of(idx);
            let pos = cursor[c] as usize;
            rows[pos] = row_of(idx) as u32;
            vals[pos] = v;
            cursor[c] += 1;
        }
        let mut gram = DMatrix::<f64>::zeros(nk, nk);
        for c in 0..ncols {
            let lo = counts[c] as usize;
            let hi = counts[c + 1] as usize;
            for a in lo..hi {
                let (ra, va) = (rows[a] as usize, vals[a]);
                for b in a..hi {
                    let (rb, vb) = (rows[b] as usize, vals[b]);
                    let contrib = va * vb;
                    gram[(ra, rb)] += contrib;
                    if ra != rb {
                        gram[(rb, ra)] += contrib;
                    }
                }
            }
        }
        gram.scale_mut(inv_p2);
        for i in 0..nk {
            gram[(i, i)] = 0.0;
        }
        if !gram.iter().all(|v| v.is_finite()) {
            return Err(Error::Init("non-finite Gram in spectral initialization".into()));
        }
        let (_, vecs) = sym_eig_desc(&gram);
        factors.push(vecs.columns(0, ranks[mode]).into_owned());
    }

    // Core: p⁻¹ (U⁺ᵀ, V⁺ᵀ, W⁺ᵀ) · Y, accumulated entrywise.
    let (r1, r2, r3) = r;
    let transpose = |m: &DMatrix<f64>| {
        let (n, rr) = (m.nrows(), m.ncols());
        let mut out = vec![0.0; n * rr];
        for i in 0..n {
            for j in 0..rr {
                out[i * rr + j] = m[(i, j)];
            }
        }
        out
    };
    let ut = transpose(&factors[0]);
    let vt = transpose(&factors[1]);
    let wt = transpose(&factors[2]);
    let inv_p = 1.0 / obs.p;
    let partials: Vec<Vec<f64>> = obs
        .indices
        .par_chunks(CHUNK)
        .zip(obs.values.par_chunks(CHUNK))
        .map(|(idx_chunk, val_chunk)| {
            let mut gs = vec![0.0; r1 * r2 * r3];
            for (idx, &y) in idx_chunk.iter().zip(val_chunk) {
                let u = &ut[idx[0] as usize * r1..][..r1];
                let v = &vt[idx[1] as usize * r2..][..r2];
                let w = &wt[idx[2] as usize * r3..][..r3];
                let c = y * inv_p;
                for j3 in 0..r3 {
                    let cw = c * w[j3];
                    for j2 in 0..r2 {
                        let cvw = cw * v[j2];
                        let slice = &mut gs[(j2 + j3 * r2) * r1..][..r1];
                        for j1 in 0..r1 {
                            slice[j1] += cvw * u[j1];
                        }
                    }
                }
            }
            gs
        })
        .collect();
    let mut core = vec![0.0; r1 * r2 * r3];
    for part in partials {
        for (acc, x) in core.iter_mut().zip(&part) {
            *acc += x;
        }
    }
    let s = Tensor3::from_data(r, core)?;
    let w = factors.pop().unwrap();
    let v = factors.pop().unwrap();
    let u = factors.pop().unwrap();
    let quad = FactorQuad::new(u, v, w, s)?;
    match projection_b {
        Some(b) => scaled_projection(&quad, b),
        None => Ok(quad),
    }
}

/// Where the solver's starting point comes from.
#[derive(Clone, Debug)]
pub enum CompletionInit {
    Spectral,
    /// Factors `N(0, 1/n_k)`, core `N(0, ‖Y‖²_F / (p·r1·r2·r3))`.
    Random { seed: u64 },
    Provided(FactorQuad),
}

/// How the sampling probability enters the estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PMode {
    /// Use the generative `p` carried by the observations.
    Given,
    /// Replace it with `|Ω| / (n1·n2·n3)`.
    Estimated,
}

#[derive(Clone, Debug)]
pub struct CompletionParams {
    pub solver: SolverParams,
    pub p_mode: PMode,
    pub init: CompletionInit,
}

impl Default for CompletionParams {
    fn default() -> Self {
        CompletionParams {
            solver: SolverParams::default(),
            p_mode: PMode::Given,
            init: CompletionInit::Spectral,
        }
    }
}

fn random_init(obs: &ObservationSet, r: (usize, usize, usize), seed: u64) -> Result<FactorQuad> {
    let (n1, n2, n3) = obs.dims;
    let (r1, r2, r3) = r;
    let gauss = |n: usize, rr: usize, purpose: u64, scale: f64| {
        let s = Stream::new(seed, purpose, 0);
        DMatrix::from_fn(n, rr, |i, j| scale * s.normal_at((i + j * n) as u64))
    };
    let u = gauss(n1, r1, tag::INIT_U, (1.0 / n1 as f64).sqrt());
    let v = gauss(n2, r2, tag::INIT_V, (1.0 / n2 as f64).sqrt());
    let w = gauss(n3, r3, tag::INIT_W, (1.0 / n3 as f64).sqrt());
    let y_norm_sq: f64 = obs.values.iter().map(|v| v * v).sum();
    let core_sigma = (y_norm_sq / (obs.p * (r1 * r2 * r3) as f64)).sqrt();
    let cs = Stream::new(seed, tag::INIT_CORE, 0);
    let mut s = Tensor3::zeros(r);
    for (i, v) in s.as_mut_slice().iter_mut().enumerate() {
        *v = core_sigma * cs.normal_at(i as u64);
    }
    FactorQuad::new(u, v, w, s)
}

fn resolve_obs(obs: &ObservationSet, params: &CompletionParams) -> Result<ObservationSet> {
    match params.p_mode {
        PMode::Given => Ok(obs.clone()),
        PMode::Estimated => obs.with_estimated_p(),
    }
}

fn build_init(
    obs: &ObservationSet,
    r: (usize, usize, usize),
    params: &CompletionParams,
) -> Result<FactorQuad> {
    match &params.init {
        CompletionInit::Spectral => {
            let b = if params.solver.use_projection {
                params.solver.projection_b
            } else {
                None
            };
            spectral_init_completion(obs, r, b)
        }
        CompletionInit::Random { seed } => random_init(obs, r, *seed),
        CompletionInit::Provided(f) => {
            if f.dims() != obs.dims || f.ranks() != r {
                return Err(Error::DimMismatch(
                    "provided initialization does not match the problem".into(),
                ));
            }
            Ok(f.clone())
        }
    }
}

/// Scaled projected gradient updates from a configurable initialization.
pub fn solve_completion(
    obs: &ObservationSet,
    r: (usize, usize, usize),
    params: &CompletionParams,
    truth: Option<&TruthInfo>,
) -> Result<Trajectory> {
    params.solver.validate()?;
    let obs = resolve_obs(obs, params)?;
    let f0 = build_init(&obs, r, params)?;
    drive(f0, &params.solver, StepRule::Scaled, truth, |f| {
        completion_gradients_with_loss(f, &obs)
    })
}

/// Plain-GD baseline with the `σ_max(X*)⁻²` factor scaling; the truth is
/// required since it supplies `σ_max`.
pub fn solve_completion_gd(
    obs: &ObservationSet,
    r: (usize, usize, usize),
    params: &CompletionParams,
    truth: &TruthInfo,
) -> Result<Trajectory> {
    params.solver.validate()?;
    let obs = resolve_obs(obs, params)?;
    let f0 = build_init(&obs, r, params)?;
    drive(
        f0,
        &params.solver,
        StepRule::Plain {
            sigma_max: truth.sigma_max,
        },
        Some(truth),
        |f| completion_gradients_with_loss(f, &obs),
    )
}
