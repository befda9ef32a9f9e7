//! Minimal deterministic numeric kernel.
//!
//! Vectors and matrices are plain `f64` containers with the few operations
//! the rest of the crate needs: dot products, norms, rank-1 accumulation,
//! a max-shifted log-sum-exp, and a clamped angle between directions.
//! No decompositions, no broadcasting.

use crate::error::{Error, Result};

/// Clamp applied to a cosine before `acos`, so the angle stays differentiable
/// and finite when two directions (anti-)coincide.
pub const DEFAULT_CLAMP_TOLERANCE: f64 = 1e-7;

/// Dense vector of 64-bit floats. Nonempty, all entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    /// Validating constructor: rejects empty and non-finite input.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("vector"));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Vec64(values))
    }

    /// Construction from values already known to be finite (hot paths).
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Vec64(values)
    }

    pub fn zeros(len: usize) -> Self {
        assert!(len > 0, "zero-length vector");
        Vec64(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vec64) -> Result<f64> {
        check_len(self.len(), other.len())?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy; errors on a zero vector.
    pub fn normalized(&self) -> Result<Vec64> {
        let n = self.norm();
        if n <= 0.0 {
            return Err(Error::DegenerateFeature);
        }
        Ok(Vec64(self.0.iter().map(|v| v / n).collect()))
    }

    /// self += scale * other
    pub fn add_scaled(&mut self, scale: f64, other: &Vec64) -> Result<()> {
        check_len(self.len(), other.len())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, scale: f64) {
        for v in &mut self.0 {
            *v *= scale;
        }
    }

    pub fn sub(&self, other: &Vec64) -> Result<Vec64> {
        check_len(self.len(), other.len())?;
        Ok(Vec64(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }
}

impl std::ops::Deref for Vec64 {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Index<usize> for Vec64 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat64 {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Mat64 {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("matrix"));
        }
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Mat64 { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "zero-sized matrix");
        Mat64 {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    /// y = A x
    pub fn matvec(&self, x: &Vec64) -> Result<Vec64> {
        check_len(self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        for (r, o) in out.iter_mut().enumerate() {
            let row = self.row(r);
            let mut acc = 0.0;
            for (w, v) in row.iter().zip(x.as_slice()) {
                acc += w * v;
            }
            *o = acc;
        }
        Ok(Vec64(out))
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: &Vec64) -> Result<Vec64> {
        check_len(self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        for (r, xv) in x.as_slice().iter().enumerate() {
            let row = self.row(r);
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * xv;
            }
        }
        Ok(Vec64(out))
    }

    /// self += scale * (u ⊗ v), with u along rows and v along columns.
    pub fn add_outer(&mut self, scale: f64, u: &Vec64, v: &Vec64) -> Result<()> {
        check_len(self.rows, u.len())?;
        check_len(self.cols, v.len())?;
        for (r, uv) in u.as_slice().iter().enumerate() {
            let s = scale * uv;
            let row = &mut self.values[r * self.cols..(r + 1) * self.cols];
            for (w, vv) in row.iter_mut().zip(v.as_slice()) {
                *w += s * vv;
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, scale: f64, other: &Mat64) -> Result<()> {
        check_len(self.values.len(), other.values.len())?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.values.iter_mut().for_each(|v| *v = value);
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Euclidean distance between two equal-length vectors.
pub fn l2_distance(a: &Vec64, b: &Vec64) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let mut acc = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        let d = x - y;
        acc += d * d;
    }
    Ok(acc.sqrt())
}

/// log Σ exp(x), max-shifted so inputs up to ±700 do not overflow.
pub fn log_sum_exp(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Empty("log_sum_exp"));
    }
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite("log_sum_exp"));
    }
    let sum: f64 = xs.iter().map(|x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Angle in [0, π] between two nonzero vectors, with the cosine clamped to
/// [-1+δ, 1-δ] before `acos` (δ = [`DEFAULT_CLAMP_TOLERANCE`]).
pub fn cosine_angle(a: &Vec64, b: &Vec64) -> Result<f64> {
    cosine_angle_clamped(a, b, DEFAULT_CLAMP_TOLERANCE)
}

/// [`cosine_angle`] with an explicit clamp tolerance.
pub fn cosine_angle_clamped(a: &Vec64, b: &Vec64, delta: f64) -> Result<f64> {
    check_len(a.len(), b.len())?;
    let na = a.norm();
    let nb = b.norm();
    if na <= 0.0 || nb <= 0.0 {
        return Err(Error::DegenerateFeature);
    }
    let cos = a.dot(b)? / (na * nb);
    Ok(angle_from_cos(cos, delta).0)
}

/// (arccos(clamp(u)), d angle / d u). The derivative is zero in the clamped
/// regions, matching the piecewise definition.
pub(crate) fn angle_from_cos(u: f64, delta: f64) -> (f64, f64) {
    let lo = -1.0 + delta;
    let hi = 1.0 - delta;
    if u <= lo {
        (lo.acos(), 0.0)
    } else if u >= hi {
        (hi.acos(), 0.0)
    } else {
        (u.acos(), -1.0 / (1.0 - u * u).sqrt())
    }
}
