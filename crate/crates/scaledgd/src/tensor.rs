//! Dense order-3 tensor algebra: matricization, multilinear products,
//! inner products, HOSVD, and singular-value extremes.
//!
//! Storage is the column-major vectorization order: entry `(i1, i2, i3)`
//! (0-based) lives at offset `i1 + i2*n1 + i3*n1*n2`. With this layout the
//! mode-1 matricization is a plain reshape, and the mode-2/3 unfoldings
//! are stride permutations chosen so that `M2(X) = V M2(S) (W ⊗ U)ᵀ` and
//! `M3(X) = W M3(S) (V ⊗ U)ᵀ` hold with the standard Kronecker row order.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factors::FactorQuad;

/// Relative cutoff below which a singular value is treated as zero.
pub const SIGMA_REL_CUTOFF: f64 = 1e-12;

/// Dense order-3 tensor with dimensions `(n1, n2, n3)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dims: (usize, usize, usize),
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Tensor3 {
            dims,
            data: vec![0.0; dims.0 * dims.1 * dims.2],
        }
    }

    /// Wrap a data buffer already in vectorization order.
    pub fn from_data(dims: (usize, usize, usize), data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DimMismatch(format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Parameter("tensor contains non-finite entries".into()));
        }
        Ok(Tensor3 { dims, data })
    }

    pub fn from_fn(dims: (usize, usize, usize), mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut t = Tensor3::zeros(dims);
        for i3 in 0..dims.2 {
            for i2 in 0..dims.1 {
                for i1 in 0..dims.0 {
                    t.data[i1 + i2 * dims.0 + i3 * dims.0 * dims.1] = f(i1, i2, i3);
                }
            }
        }
        t
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i1: usize, i2: usize, i3: usize) -> f64 {
        self.data[i1 + i2 * self.dims.0 + i3 * self.dims.0 * self.dims.1]
    }

    #[inline]
    pub fn set(&mut self, i1: usize, i2: usize, i3: usize, v: f64) {
        self.data[i1 + i2 * self.dims.0 + i3 * self.dims.0 * self.dims.1] = v;
    }

    /// Flat view in vectorization order.
    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.data {
            *v *= c;
        }
    }

    /// `self - other`, entrywise.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        if self.dims != other.dims {
            return Err(Error::DimMismatch(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 {
            dims: self.dims,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Mode-k unfolding of a [`Tensor3`], stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matricization {
    pub mode: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matricization {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Mode-k unfolding. Entry maps (0-based):
/// mode 1: `(i1, i2 + i3*n2)`, mode 2: `(i2, i1 + i3*n1)`, mode 3: `(i3, i1 + i2*n1)`.
pub fn matricize(x: &Tensor3, mode: usize) -> Matricization {
    let (n1, n2, n3) = x.dims();
    let (rows, cols) = match mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        3 => (n3, n1 * n2),
        _ => panic!("mode must be 1, 2, or 3"),
    };
    let mut data = vec![0.0; rows * cols];
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let v = x.get(i1, i2, i3);
                let (r, c) = match mode {
                    1 => (i1, i2 + i3 * n2),
                    2 => (i2, i1 + i3 * n1),
                    _ => (i3, i1 + i2 * n1),
                };
                data[r * cols + c] = v;
            }
        }
    }
    Matricization { mode, rows, cols, data }
}

/// Inverse of [`matricize`]; exact (a pure index permutation).
pub fn tensorize(m: &Matricization, dims: (usize, usize, usize)) -> Result<Tensor3> {
    let (n1, n2, n3) = dims;
    let (rows, cols) = match m.mode {
        1 => (n1, n2 * n3),
        2 => (n2, n1 * n3),
        3 => (n3, n1 * n2),
        _ => return Err(Error::Parameter(format!("invalid mode {}", m.mode))),
    };
    if m.rows != rows || m.cols != cols {
        return Err(Error::DimMismatch(format!(
            "mode-{} matrix is {}x{}, dims {:?} require {}x{}",
            m.mode, m.rows, m.cols, dims, rows, cols
        )));
    }
    let mut t = Tensor3::zeros(dims);
    for i3 in 0..n3 {
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let (r, c) = match m.mode {
                    1 => (i1, i2 + i3 * n2),
                    2 => (i2, i1 + i3 * n1),
                    _ => (i3, i1 + i2 * n1),
                };
                t.set(i1, i2, i3, m.data[r * m.cols + c]);
            }
        }
    }
    Ok(t)
}

/// Mode-k unfolding as a column-major matrix (internal fast path).
pub(crate) fn unfold(x: &Tensor3, mode: usize) -> DMatrix<f64> {
    let (n1, n2, n3) = x.dims();
    match mode {
        // Mode 1 is the memory layout itself.
        1 => DMatrix::from_column_slice(n1, n2 * n3, x.as_slice()),
        2 => {
            let mut m = DMatrix::zeros(n2, n1 * n3);
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    for i1 in 0..n1 {
                        m[(i2, i1 + i3 * n1)] = x.get(i1, i2, i3);
                    }
                }
            }
            m
        }
        3 => {
            let mut m = DMatrix::zeros(n3, n1 * n2);
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    for i1 in 0..n1 {
                        m[(i3, i1 + i2 * n1)] = x.get(i1, i2, i3);
                    }
                }
            }
            m
        }
        _ => panic!("mode must be 1, 2, or 3"),
    }
}

pub(crate) fn fold(m: &DMatrix<f64>, mode: usize, dims: (usize, usize, usize)) -> Tensor3 {
    let (n1, n2, n3) = dims;
    match mode {
        1 => {
            debug_assert_eq!(m.nrows(), n1);
            debug_assert_eq!(m.ncols(), n2 * n3);
            Tensor3 {
                dims,
                data: m.as_slice().to_vec(),
            }
        }
        2 => {
            let mut t = Tensor3::zeros(dims);
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    for i1 in 0..n1 {
                        t.set(i1, i2, i3, m[(i2, i1 + i3 * n1)]);
                    }
                }
            }
            t
        }
        3 => {
            let mut t = Tensor3::zeros(dims);
            for i3 in 0..n3 {
                for i2 in 0..n2 {
                    for i1 in 0..n1 {
                        t.set(i1, i2, i3, m[(i3, i1 + i2 * n1)]);
                    }
                }
            }
            t
        }
        _ => panic!("mode must be 1, 2, or 3"),
    }
}

/// Multiply `t` along `mode` by `m` (rows of `m` index the new mode size).
pub(crate) fn mode_product(t: &Tensor3, m: &DMatrix<f64>, mode: usize) -> Result<Tensor3> {
    let (n1, n2, n3) = t.dims();
    let old = match mode {
        1 => n1,
        2 => n2,
        3 => n3,
        _ => return Err(Error::Parameter(format!("invalid mode {mode}"))),
    };
    if m.ncols() != old {
        return Err(Error::DimMismatch(format!(
            "mode-{mode} product: matrix has {} cols, tensor mode size is {old}",
            m.ncols()
        )));
    }
    let unf = unfold(t, mode);
    let prod = m * unf;
    let new_dims = match mode {
        1 => (m.nrows(), n2, n3),
        2 => (n1, m.nrows(), n3),
        _ => (n1, n2, m.nrows()),
    };
    Ok(fold(&prod, mode, new_dims))
}

/// `(A, B, C) · S`: three successive mode products, never materializing
/// Kronecker factors.
pub fn multilinear_multiply(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: &Tensor3,
) -> Result<Tensor3> {
    let t1 = mode_product(s, a, 1)?;
    let t2 = mode_product(&t1, b, 2)?;
    mode_product(&t2, c, 3)
}

/// `(Aᵀ, Bᵀ, Cᵀ) · S` without forming the transposes at call sites.
pub fn multilinear_multiply_t(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: &Tensor3,
) -> Result<Tensor3> {
    let t1 = mode_product(s, &a.transpose(), 1)?;
    let t2 = mode_product(&t1, &b.transpose(), 2)?;
    mode_product(&t2, &c.transpose(), 3)
}

/// Tensor inner product `⟨x1, x2⟩`.
pub fn inner(x1: &Tensor3, x2: &Tensor3) -> Result<f64> {
    if x1.dims() != x2.dims() {
        return Err(Error::DimMismatch(format!(
            "{:?} vs {:?}",
            x1.dims(),
            x2.dims()
        )));
    }
    Ok(x1
        .as_slice()
        .iter()
        .zip(x2.as_slice())
        .map(|(a, b)| a * b)
        .sum())
}

// ---------------------------------------------------------------------------
// Singular value machinery
// ---------------------------------------------------------------------------

/// Force the largest-magnitude entry of each column positive.
pub(crate) fn fix_column_signs(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for i in 0..m.nrows() {
            let a = m[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if m[(best, j)] < 0.0 {
            for i in 0..m.nrows() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending,
/// eigenvector signs fixed.
pub(crate) fn sym_eig_desc(g: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = g.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, n);
    for (jj, &j) in order.iter().enumerate() {
        vecs.set_column(jj, &eig.eigenvectors.column(j));
    }
    fix_column_signs(&mut vecs);
    (vals, vecs)
}

/// All singular values of `m`, descending, via the Gram matrix of the
/// smaller side (squaring is harmless at the condition numbers handled
/// here and avoids a full SVD of a strongly rectangular matrix).
pub(crate) fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let (vals, _) = sym_eig_desc(&gram);
    vals.into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

/// Top `r` left singular vectors of `m` plus all singular values
/// (descending). Uses a direct SVD for small or nearly-square inputs and
/// the thin-Gram eigen path for strongly rectangular ones.
pub(crate) fn top_left_singular(m: &DMatrix<f64>, r: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if r > rows.min(cols) {
        return Err(Error::Rank(format!(
            "requested {r} singular vectors of a {rows}x{cols} matrix"
        )));
    }
    let use_gram = cols >= 4 * rows || rows >= 4 * cols;
    if use_gram {
        if rows <= cols {
            let gram = m * m.transpose();
            let (vals, vecs) = sym_eig_desc(&gram);
            let sigmas: Vec<f64> = vals.into_iter().map(|l| l.max(0.0).sqrt()).collect();
            Ok((vecs.columns(0, r).into_owned(), sigmas))
        } else {
            // Tall matrix: eigen-decompose the small right Gram, then map
            // the right vectors through `m`.
            let gram = m.transpose() * m;
            let (vals, vecs) = sym_eig_desc(&gram);
            let sigmas: Vec<f64> = vals.into_iter().map(|l| l.max(0.0).sqrt()).collect();
            let s1 = sigmas.first().copied().unwrap_or(0.0);
            let mut u = DMatrix::zeros(rows, r);
            for j in 0..r {
                let sj = sigmas[j];
                if sj <= SIGMA_REL_CUTOFF * s1 || sj == 0.0 {
                    return Err(Error::DegenerateRank {
                        mode: 0,
                        index: j + 1,
                        sigma: sj,
                    });
                }
                let col = (m * vecs.column(j)) / sj;
                u.set_column(j, &col);
            }
            fix_column_signs(&mut u);
            Ok((u, sigmas))
        }
    } else {
        let svd = m.clone().svd(true, false);
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .partial_cmp(&svd.singular_values[a])
                .unwrap()
        });
        let sigmas: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
        let full_u = svd.u.expect("left singular vectors requested");
        let mut u = DMatrix::zeros(rows, r);
        for (jj, &j) in order.iter().take(r).enumerate() {
            u.set_column(jj, &full_u.column(j));
        }
        fix_column_signs(&mut u);
        Ok((u, sigmas))
    }
}

/// Per-mode singular-value extremes at multilinear rank `r`.
#[derive(Clone, Debug)]
pub struct SigmaReport {
    /// `max_k σ1(M_k(X))`.
    pub sigma_max: f64,
    /// `min_k σ_{r_k}(M_k(X))`.
    pub sigma_min: f64,
    /// `sigma_max / sigma_min`.
    pub kappa: f64,
    /// `(σ1, σ_{r_k})` per mode.
    pub per_mode: [(f64, f64); 3],
    /// A singular-value tie straddles the rank cut in some mode.
    pub tie_at_cut: bool,
}

/// Extreme singular values of the three matricizations, per the rank `r`.
pub fn sigma_extremes(x: &Tensor3, r: (usize, usize, usize)) -> Result<SigmaReport> {
    let ranks = [r.0, r.1, r.2];
    let mut per_mode = [(0.0, 0.0); 3];
    let mut tie = false;
    for mode in 1..=3 {
        let rk = ranks[mode - 1];
        let m = unfold(x, mode);
        if rk == 0 || rk > m.nrows().min(m.ncols()) {
            return Err(Error::Rank(format!(
                "mode-{mode} rank {rk} out of range for {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let sigmas = singular_values(&m);
        let s1 = sigmas[0];
        let srk = sigmas[rk - 1];
        if srk <= SIGMA_REL_CUTOFF * s1 {
            return Err(Error::DegenerateRank {
                mode,
                index: rk,
                sigma: srk,
            });
        }
        if rk < sigmas.len() && (srk - sigmas[rk]).abs() <= SIGMA_REL_CUTOFF * s1 {
            tie = true;
        }
        per_mode[mode - 1] = (s1, srk);
    }
    let sigma_max = per_mode.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    let sigma_min = per_mode.iter().map(|p| p.1).fold(f64::MAX, f64::min);
    Ok(SigmaReport {
        sigma_max,
        sigma_min,
        kappa: sigma_max / sigma_min,
        per_mode,
        tie_at_cut: tie,
    })
}

/// Top-`r` HOSVD: per-mode top left singular vectors, core by projection.
pub fn hosvd(x: &Tensor3, r: (usize, usize, usize)) -> Result<FactorQuad> {
    let (n1, n2, n3) = x.dims();
    let ranks = [r.0, r.1, r.2];
    let dims = [n1, n2, n3];
    for k in 0..3 {
        let others = dims.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, &d)| d).product::<usize>();
        if ranks[k] == 0 || ranks[k] > dims[k] || ranks[k] > others {
            return Err(Error::Rank(format!(
                "mode-{} rank {} out of range for dims {:?}",
                k + 1,
                ranks[k],
                x.dims()
            )));
        }
    }
    let mut factors = Vec::with_capacity(3);
    for mode in 1..=3 {
        let m = unfold(x, mode);
        let (u, _) = top_left_singular(&m, ranks[mode - 1]).map_err(|e| match e {
            Error::DegenerateRank { index, sigma, .. } => Error::DegenerateRank { mode, index, sigma },
            other => other,
        })?;
        factors.push(u);
    }
    let core = multilinear_multiply_t(&factors[0], &factors[1], &factors[2], x)?;
    let w = factors.pop().unwrap();
    let v = factors.pop().unwrap();
    let u = factors.pop().unwrap();
    Ok(FactorQuad::new(u, v, w, core)?)
}
