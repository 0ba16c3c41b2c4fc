//! Binary file formats and CSV export.
//!
//! All multi-byte values are little-endian.
//!
//! * `TNS3` — dense tensor: magic `TNS3`, u8 version = 1, three u32 dims,
//!   then `n1·n2·n3` f64 values in vectorization order.
//! * `TFQ1` — factor quadruple: magic `TFQ1`, then four TNS3 blocks
//!   (U, V, W as degenerate `n×r×1` tensors, then the core S).
//! * `OBS1` — observations: magic `OBS1`, u8 version = 1, three u32 dims,
//!   f64 sampling probability, u64 count, then sorted records of
//!   `(u32 i1, u32 i2, u32 i3, f64 value)` with 0-based indices.
//! * `YVC1` — measurement vector: magic `YVC1`, u64 m, then m f64s.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::completion::ObservationSet;
use crate::error::{Error, Result};
use crate::factors::FactorQuad;
use crate::solver::Trajectory;
use crate::tensor::Tensor3;

const TNS3_MAGIC: &[u8; 4] = b"TNS3";
const TFQ1_MAGIC: &[u8; 4] = b"TFQ1";
const OBS1_MAGIC: &[u8; 4] = b"OBS1";
const YVC1_MAGIC: &[u8; 4] = b"YVC1";

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("unexpected end of file".into()))?;
    Ok(buf)
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    Ok(read_exact::<R, 1>(r)?[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_exact(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_exact(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact(r)?))
}

pub fn write_tensor<W: Write>(w: &mut W, x: &Tensor3) -> Result<()> {
    let (n1, n2, n3) = x.dims();
    w.write_all(TNS3_MAGIC)?;
    w.write_all(&[1u8])?;
    write_u32(w, n1 as u32)?;
    write_u32(w, n2 as u32)?;
    write_u32(w, n3 as u32)?;
    for &v in x.as_slice() {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<Tensor3> {
    let magic = read_exact::<R, 4>(r)?;
    if &magic != TNS3_MAGIC {
        return Err(Error::Format(format!("bad TNS3 magic {magic:?}")));
    }
    let version = read_u8(r)?;
    if version != 1 {
        return Err(Error::Format(format!("unsupported TNS3 version {version}")));
    }
    let n1 = read_u32(r)? as usize;
    let n2 = read_u32(r)? as usize;
    let n3 = read_u32(r)? as usize;
    if n1 == 0 || n2 == 0 || n3 == 0 {
        return Err(Error::Format("zero tensor dimension".into()));
    }
    let len = n1
        .checked_mul(n2)
        .and_then(|p| p.checked_mul(n3))
        .ok_or_else(|| Error::Format("tensor dimensions overflow".into()))?;
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(read_f64(r)?);
    }
    Tensor3::from_data((n1, n2, n3), data)
}

fn matrix_as_tensor(m: &DMatrix<f64>) -> Tensor3 {
    // Column-major matrix data is exactly the (rows, cols, 1) vectorization.
    Tensor3::from_data((m.nrows(), m.ncols(), 1), m.as_slice().to_vec())
        .expect("matrix data is finite and sized")
}

fn tensor_as_matrix(t: &Tensor3) -> Result<DMatrix<f64>> {
    let (n, r, depth) = t.dims();
    if depth != 1 {
        return Err(Error::Format(format!(
            "expected an n x r x 1 factor block, got dims {:?}",
            t.dims()
        )));
    }
    Ok(DMatrix::from_column_slice(n, r, t.as_slice()))
}

pub fn write_quad<W: Write>(w: &mut W, f: &FactorQuad) -> Result<()> {
    w.write_all(TFQ1_MAGIC)?;
    write_tensor(w, &matrix_as_tensor(&f.u))?;
    write_tensor(w, &matrix_as_tensor(&f.v))?;
    write_tensor(w, &matrix_as_tensor(&f.w))?;
    write_tensor(w, &f.s)
}

pub fn read_quad<R: Read>(r: &mut R) -> Result<FactorQuad> {
    let magic = read_exact::<R, 4>(r)?;
    if &magic != TFQ1_MAGIC {
        return Err(Error::Format(format!("bad TFQ1 magic {magic:?}")));
    }
    let u = tensor_as_matrix(&read_tensor(r)?)?;
    let v = tensor_as_matrix(&read_tensor(r)?)?;
    let w = tensor_as_matrix(&read_tensor(r)?)?;
    let s = read_tensor(r)?;
    FactorQuad::new(u, v, w, s)
}

pub fn write_observations<W: Write>(w: &mut W, obs: &ObservationSet) -> Result<()> {
    let (n1, n2, n3) = obs.dims;
    w.write_all(OBS1_MAGIC)?;
    w.write_all(&[1u8])?;
    write_u32(w, n1 as u32)?;
    write_u32(w, n2 as u32)?;
    write_u32(w, n3 as u32)?;
    write_f64(w, obs.p)?;
    write_u64(w, obs.indices.len() as u64)?;
    for (idx, &val) in obs.indices.iter().zip(&obs.values) {
        write_u32(w, idx[0])?;
        write_u32(w, idx[1])?;
        write_u32(w, idx[2])?;
        write_f64(w, val)?;
    }
    Ok(())
}

pub fn read_observations<R: Read>(r: &mut R) -> Result<ObservationSet> {
    let magic = read_exact::<R, 4>(r)?;
    if &magic != OBS1_MAGIC {
        return Err(Error::Format(format!("bad OBS1 magic {magic:?}")));
    }
    let version = read_u8(r)?;
    if version != 1 {
        return Err(Error::Format(format!("unsupported OBS1 version {version}")));
    }
    let n1 = read_u32(r)? as usize;
    let n2 = read_u32(r)? as usize;
    let n3 = read_u32(r)? as usize;
    let p = read_f64(r)?;
    let count = read_u64(r)? as usize;
    let mut indices = Vec::with_capacity(count);
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let i1 = read_u32(r)?;
        let i2 = read_u32(r)?;
        let i3 = read_u32(r)?;
        indices.push([i1, i2, i3]);
        values.push(read_f64(r)?);
    }
    ObservationSet::new((n1, n2, n3), indices, values, p)
}

pub fn write_measurements<W: Write>(w: &mut W, y: &[f64]) -> Result<()> {
    w.write_all(YVC1_MAGIC)?;
    write_u64(w, y.len() as u64)?;
    for &v in y {
        write_f64(w, v)?;
    }
    Ok(())
}

pub fn read_measurements<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let magic = read_exact::<R, 4>(r)?;
    if &magic != YVC1_MAGIC {
        return Err(Error::Format(format!("bad YVC1 magic {magic:?}")));
    }
    let m = read_u64(r)? as usize;
    let mut y = Vec::with_capacity(m);
    for _ in 0..m {
        let v = read_f64(r)?;
        if !v.is_finite() {
            return Err(Error::Format("non-finite measurement value".into()));
        }
        y.push(v);
    }
    Ok(y)
}

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_tensor(path: &Path, x: &Tensor3) -> Result<()> {
    write_atomic(path, |w| write_tensor(w, x))
}

pub fn load_tensor(path: &Path) -> Result<Tensor3> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}

pub fn save_quad(path: &Path, f: &FactorQuad) -> Result<()> {
    write_atomic(path, |w| write_quad(w, f))
}

pub fn load_quad(path: &Path) -> Result<FactorQuad> {
    read_quad(&mut BufReader::new(File::open(path)?))
}

pub fn save_observations(path: &Path, obs: &ObservationSet) -> Result<()> {
    write_atomic(path, |w| write_observations(w, obs))
}

pub fn load_observations(path: &Path) -> Result<ObservationSet> {
    read_observations(&mut BufReader::new(File::open(path)?))
}

pub fn save_measurements(path: &Path, y: &[f64]) -> Result<()> {
    write_atomic(path, |w| write_measurements(w, y))
}

pub fn load_measurements(path: &Path) -> Result<Vec<f64>> {
    read_measurements(&mut BufReader::new(File::open(path)?))
}

/// Trajectory CSV: `iter,loss,rel_err,wall_ms`; a missing relative error
/// is written as NaN.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &Trajectory) -> Result<()> {
    writeln!(w, "iter,loss,rel_err,wall_ms")?;
    for rec in &traj.iterations {
        writeln!(
            w,
            "{},{:e},{:e},{:.3}",
            rec.iter,
            rec.loss,
            rec.rel_err.unwrap_or(f64::NAN),
            rec.wall_ms
        )?;
    }
    Ok(())
}

pub fn save_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    write_atomic(path, |w| write_trajectory_csv(w, traj))
}
