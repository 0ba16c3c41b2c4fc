//! Tensor regression with a streaming Gaussian design: the measurement
//! operator and its adjoint, gradients, HOSVD initialization, the
//! ScaledGD / GD solvers, and an empirical restricted-isometry probe.
//!
//! Measurement tensors are never stored. Each `A_i` is a pure function of
//! `(seed, i, entry index)`, regenerated identically on every pass, so
//! memory stays `O(n1·n2·n3)` no matter how many measurements there are.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factors::{random_orthonormal, FactorQuad};
use crate::rng::{tag, Stream};
use crate::solver::{
    bundle_from_residual, drive, GradientBundle, SolverParams, StepRule, Trajectory, TruthInfo,
};
use crate::tensor::{hosvd, Tensor3};

/// A linear measurement map and its adjoint.
pub trait MeasurementOp: Sync {
    fn measurement_count(&self) -> usize;
    fn dims(&self) -> (usize, usize, usize);
    /// `y_i = ⟨A_i, X⟩`.
    fn forward(&self, x: &Tensor3) -> Result<Vec<f64>>;
    /// `Σ_i y_i A_i`.
    fn adjoint(&self, y: &[f64]) -> Result<Tensor3>;
}

/// Seeded description of `m` Gaussian measurement tensors with i.i.d.
/// `N(0, 1/m)` entries.
#[derive(Clone, Copy, Debug)]
pub struct GaussianDesign {
    pub m: usize,
    pub dims: (usize, usize, usize),
    pub seed: u64,
}

impl GaussianDesign {
    pub fn new(m: usize, dims: (usize, usize, usize), seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Parameter("measurement count must be positive".into()));
        }
        Ok(GaussianDesign { m, dims, seed })
    }

    fn stream(&self, i: usize) -> Stream {
        Stream::new(self.seed, tag::MEASUREMENT, i as u64)
    }

    /// Materialize one measurement tensor (tests and the adjoint identity).
    pub fn measurement(&self, i: usize) -> Tensor3 {
        let stream = self.stream(i);
        let scale = 1.0 / (self.m as f64).sqrt();
        let mut t = Tensor3::zeros(self.dims);
        let buf = t.as_mut_slice();
        stream.fill_normal(0, buf);
        for v in buf.iter_mut() {
            *v *= scale;
        }
        t
    }
}

/// How many measurements each parallel chunk owns.
const MEAS_CHUNK: usize = 128;

impl MeasurementOp for GaussianDesign {
    fn measurement_count(&self) -> usize {
        self.m
    }

    fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn forward(&self, x: &Tensor3) -> Result<Vec<f64>> {
        if x.dims() != self.dims {
            return Err(Error::DimMismatch(format!(
                "tensor dims {:?} vs design dims {:?}",
                x.dims(),
                self.dims
            )));
        }
        let data = x.as_slice();
        let n = data.len();
        let scale = 1.0 / (self.m as f64).sqrt();
        let mut y = vec![0.0; self.m];
        y.par_chunks_mut(MEAS_CHUNK)
            .enumerate()
            .for_each(|(chunk, out)| {
                let base = chunk * MEAS_CHUNK;
                for (k, yi) in out.iter_mut().enumerate() {
                    let stream = self.stream(base + k);
                    let mut acc = 0.0;
                    let mut l = 0usize;
                    while l + 1 < n {
                        let (z0, z1) = stream.normal_pair((l as u64) >> 1);
                        acc += z0 * data[l] + z1 * data[l + 1];
                        l += 2;
                    }
                    if l < n {
                        acc += stream.normal_at(l as u64) * data[l];
                    }
                    *yi = acc * scale;
                }
            });
        Ok(y)
    }

    fn adjoint(&self, y: &[f64]) -> Result<Tensor3> {
        if y.len() != self.m {
            return Err(Error::DimMismatch(format!(
                "measurement vector length {} vs design m {}",
                y.len(),
                self.m
            )));
        }
        let (n1, n2, n3) = self.dims;
        let n = n1 * n2 * n3;
        let scale = 1.0 / (self.m as f64).sqrt();
        let partials: Vec<Vec<f64>> = y
            .par_chunks(MEAS_CHUNK)
            .enumerate()
            .map(|(chunk, ys)| {
                let base = chunk * MEAS_CHUNK;
                let mut acc = vec![0.0; n];
                for (k, &yi) in ys.iter().enumerate() {
                    if yi == 0.0 {
                        continue;
                    }
                    let stream = self.stream(base + k);
                    let mut l = 0usize;
                    while l + 1 < n {
                        let (z0, z1) = stream.normal_pair((l as u64) >> 1);
                        acc[l] += yi * (z0 * scale);
                        acc[l + 1] += yi * (z1 * scale);
                        l += 2;
                    }
                    if l < n {
                        acc[l] += yi * (stream.normal_at(l as u64) * scale);
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![0.0; n];
        for part in partials {
            for (acc, x) in out.iter_mut().zip(&part) {
                *acc += x;
            }
        }
        Tensor3::from_data(self.dims, out)
    }
}

/// Identity harness hook: `forward` is vectorization, `adjoint` is
/// tensorization. Substituting it for the Gaussian design turns
/// regression into plain factorization.
#[derive(Clone, Copy, Debug)]
pub struct IdentityMeasurement {
    pub dims: (usize, usize, usize),
}

impl MeasurementOp for IdentityMeasurement {
    fn measurement_count(&self) -> usize {
        self.dims.0 * self.dims.1 * self.dims.2
    }

    fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    fn forward(&self, x: &Tensor3) -> Result<Vec<f64>> {
        if x.dims() != self.dims {
            return Err(Error::DimMismatch("identity measurement dims".into()));
        }
        Ok(x.as_slice().to_vec())
    }

    fn adjoint(&self, y: &[f64]) -> Result<Tensor3> {
        Tensor3::from_data(self.dims, y.to_vec())
    }
}

/// Gradients of `½‖A((U,V,W)·S) − y‖²` plus the loss value.
pub(crate) fn regression_gradients_with_loss(
    f: &FactorQuad,
    op: &dyn MeasurementOp,
    y: &[f64],
) -> Result<(GradientBundle, f64)> {
    if f.dims() != op.dims() {
        return Err(Error::DimMismatch(format!(
            "quad dims {:?} vs design dims {:?}",
            f.dims(),
            op.dims()
        )));
    }
    if y.len() != op.measurement_count() {
        return Err(Error::DimMismatch(format!(
            "measurement vector length {} vs m {}",
            y.len(),
            op.measurement_count()
        )));
    }
    let xhat = f.reconstruct()?;
    let mut resid = op.forward(&xhat)?;
    for (r, yi) in resid.iter_mut().zip(y) {
        *r -= yi;
    }
    let loss = 0.5 * resid.iter().map(|v| v * v).sum::<f64>();
    let e = op.adjoint(&resid)?;
    Ok((bundle_from_residual(f, &e)?, loss))
}

/// Gradients of the regression loss.
pub fn regression_gradients(
    f: &FactorQuad,
    op: &dyn MeasurementOp,
    y: &[f64],
) -> Result<GradientBundle> {
    regression_gradients_with_loss(f, op, y).map(|(g, _)| g)
}

/// HOSVD of the adjoint applied to the measurements.
pub fn spectral_init_regression(
    op: &dyn MeasurementOp,
    y: &[f64],
    r: (usize, usize, usize),
) -> Result<FactorQuad> {
    if y.len() != op.measurement_count() {
        return Err(Error::DimMismatch(format!(
            "measurement vector length {} vs m {}",
            y.len(),
            op.measurement_count()
        )));
    }
    let backprojected = op.adjoint(y)?;
    hosvd(&backprojected, r)
}

#[derive(Clone, Debug, Default)]
pub enum RegressionInit {
    #[default]
    Spectral,
    Provided(FactorQuad),
}

/// Scaled gradient updates on the regression loss.
pub fn solve_regression(
    op: &dyn MeasurementOp,
    y: &[f64],
    r: (usize, usize, usize),
    params: &SolverParams,
    truth: Option<&TruthInfo>,
    init: RegressionInit,
) -> Result<Trajectory> {
    params.validate()?;
    let f0 = match init {
        RegressionInit::Spectral => spectral_init_regression(op, y, r)?,
        RegressionInit::Provided(f) => f,
    };
    drive(f0, params, StepRule::Scaled, truth, |f| {
        regression_gradients_with_loss(f, op, y)
    })
}

/// Plain-GD baseline on the regression loss.
pub fn solve_regression_gd(
    op: &dyn MeasurementOp,
    y: &[f64],
    r: (usize, usize, usize),
    params: &SolverParams,
    truth: &TruthInfo,
    init: RegressionInit,
) -> Result<Trajectory> {
    params.validate()?;
    let f0 = match init {
        RegressionInit::Spectral => spectral_init_regression(op, y, r)?,
        RegressionInit::Provided(f) => f,
    };
    drive(
        f0,
        params,
        StepRule::Plain {
            sigma_max: truth.sigma_max,
        },
        Some(truth),
        |f| regression_gradients_with_loss(f, op, y),
    )
}

/// Empirical restricted-isometry estimate over random low-rank tensors.
#[derive(Clone, Debug)]
pub struct TripEstimate {
    /// `max |‖A(X)‖² / ‖X‖²_F − 1|` over the trials.
    pub delta_hat: f64,
    pub trials: usize,
    pub r: (usize, usize, usize),
    pub worst_ratio_low: f64,
    pub worst_ratio_high: f64,
}

/// Probe the measurement map with unit-norm random rank-`r` tensors
/// (orthonormal factors, Gaussian cores).
pub fn trip_probe(
    op: &dyn MeasurementOp,
    r: (usize, usize, usize),
    trials: usize,
    seed: u64,
) -> Result<TripEstimate> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let (n1, n2, n3) = op.dims();
    if r.0 > n1 || r.1 > n2 || r.2 > n3 || r.0 == 0 || r.1 == 0 || r.2 == 0 {
        return Err(Error::Rank(format!("rank {r:?} out of range for dims {:?}", op.dims())));
    }
    let mut delta_hat: f64 = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 0..trials {
        let stream_id = t as u64;
        let u = random_orthonormal(n1, r.0, seed, tag::GT_FACTOR_U, stream_id + 1);
        let v = random_orthonormal(n2, r.1, seed, tag::GT_FACTOR_V, stream_id + 1);
        let w = random_orthonormal(n3, r.2, seed, tag::GT_FACTOR_W, stream_id + 1);
        let core_stream = Stream::new(seed, tag::TRIP_TRIAL, stream_id);
        let mut core = Tensor3::zeros(r);
        for (i, val) in core.as_mut_slice().iter_mut().enumerate() {
            *val = core_stream.normal_at(i as u64);
        }
        let quad = FactorQuad::new(u, v, w, core)?;
        let mut x = quad.reconstruct()?;
        let norm = x.norm();
        if norm == 0.0 {
            continue;
        }
        x.scale(1.0 / norm);
        let y = op.forward(&x)?;
        let ratio: f64 = y.iter().map(|v| v * v).sum();
        delta_hat = delta_hat.max((ratio - 1.0).abs());
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    Ok(TripEstimate {
        delta_hat,
        trials,
        r,
        worst_ratio_low: lo,
        worst_ratio_high: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_of_zero_is_zero() {
        let design = GaussianDesign::new(40, (4, 5, 3), 7).unwrap();
        let y = design.forward(&Tensor3::zeros((4, 5, 3))).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_zero_is_zero_tensor() {
        let design = GaussianDesign::new(17, (3, 3, 3), 2).unwrap();
        let x = design.adjoint(&vec![0.0; 17]).unwrap();
        assert!(x.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn adjoint_of_basis_vector_regenerates_the_measurement() {
        let design = GaussianDesign::new(9, (3, 4, 2), 5).unwrap();
        for i in [0usize, 4, 8] {
            let mut e = vec![0.0; 9];
            e[i] = 1.0;
            let via_adjoint = design.adjoint(&e).unwrap();
            let direct = design.measurement(i);
            assert_eq!(via_adjoint.as_slice(), direct.as_slice());
        }
    }

    #[test]
    fn forward_is_bit_stable_across_passes() {
        let design = GaussianDesign::new(33, (4, 4, 4), 11).unwrap();
        let x = Tensor3::from_fn((4, 4, 4), |a, b, c| (a + b + c) as f64 - 4.5);
        let y1 = design.forward(&x).unwrap();
        let y2 = design.forward(&x).unwrap();
        assert_eq!(y1, y2);
    }

    #[test]
    fn adjoint_identity_holds() {
        let design = GaussianDesign::new(25, (3, 4, 5), 13).unwrap();
        let x = Tensor3::from_fn((3, 4, 5), |a, b, c| {
            ((a * 7 + b * 3 + c) as f64 * 0.37).sin()
        });
        let stream = Stream::new(99, tag::TRIAL, 0);
        let y: Vec<f64> = (0..25).map(|i| stream.normal_at(i)).collect();
        let lhs: f64 = design
            .forward(&x)
            .unwrap()
            .iter()
            .zip(&y)
            .map(|(a, b)| a * b)
            .sum();
        let rhs = crate::tensor::inner(&x, &design.adjoint(&y).unwrap()).unwrap();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn identity_hook_reduces_to_factorization() {
        let g = crate::factors::make_ground_truth(
            (4, 4, 4),
            (2, 2, 2),
            crate::factors::TruthStyle::GaussianCore,
            3,
        )
        .unwrap();
        let x = g.reconstruct().unwrap();
        let op = IdentityMeasurement { dims: x.dims() };
        let y = op.forward(&x).unwrap();
        // A slightly perturbed quadruple.
        let mut f = g.factors.clone();
        f.u[(0, 0)] += 0.05;
        f.s.as_mut_slice()[1] -= 0.03;
        let reg = regression_gradients(&f, &op, &y).unwrap();
        let fac = crate::solver::factorization_gradients(&f, &x).unwrap();
        let du = (&reg.grad_u - &fac.grad_u).norm();
        assert!(du <= 1e-12 * fac.grad_u.norm().max(1.0));
        let ds: f64 = reg
            .grad_s
            .as_slice()
            .iter()
            .zip(fac.grad_s.as_slice())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(ds <= 1e-12);
    }

    #[test]
    fn trip_probe_on_identity_is_exact_isometry() {
        let op = IdentityMeasurement { dims: (4, 4, 4) };
        let est = trip_probe(&op, (2, 2, 2), 10, 1).unwrap();
        assert!(est.delta_hat <= 1e-12, "delta_hat = {}", est.delta_hat);
    }

    #[test]
    fn zero_measurements_give_zero_core_init() {
        let design = GaussianDesign::new(12, (4, 4, 4), 3).unwrap();
        let y = vec![0.0; 12];
        let f = spectral_init_regression(&design, &y, (2, 2, 2)).unwrap();
        assert!(f.s.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_measurement_init_is_defined() {
        let design = GaussianDesign::new(1, (3, 3, 3), 8).unwrap();
        let y = vec![1.0];
        let f = spectral_init_regression(&design, &y, (1, 1, 1)).unwrap();
        assert!(f.u.iter().all(|v| v.is_finite()));
    }
}
