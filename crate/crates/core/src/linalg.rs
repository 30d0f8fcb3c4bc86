//! Dense vector helpers and a column-major matrix.
//!
//! Vectors are plain `[f64]` slices. All reductions accumulate in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[inline]
pub(crate) fn dot_unchecked(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    // four independent accumulators; the order is fixed so results are reproducible
    let mut acc = [0.0f64; 4];
    let mut cu = u.chunks_exact(4);
    let mut cv = v.chunks_exact(4);
    for (a, b) in (&mut cu).zip(&mut cv) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut tail = 0.0;
    for (a, b) in cu.remainder().iter().zip(cv.remainder()) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`, in place.
#[inline]
pub(crate) fn axpy_in_place(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    Ok(dot_unchecked(u, v))
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(dot_unchecked(v, v))
}

/// Euclidean distance `‖u − v‖`.
pub fn dist2(u: &[f64], v: &[f64]) -> Result<f64> {
    check_len(u.len(), v.len())?;
    Ok(dist2_unchecked(u, v))
}

#[inline]
pub(crate) fn dist2_unchecked(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        let t = a - b;
        acc += t * t;
    }
    libm::sqrt(acc)
}

/// Returns `alpha * u + v`.
pub fn axpy(alpha: f64, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    check_len(u.len(), v.len())?;
    let mut out = v.to_vec();
    axpy_in_place(alpha, u, &mut out);
    Ok(out)
}

pub fn scale(alpha: f64, v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| alpha * x).collect()
}

/// Euclidean projection of `v` onto the closed ball `B(center, radius)`.
///
/// Points already inside the ball (boundary included) are returned unchanged.
/// Otherwise the point is pulled back along the ray from `center`; the scale is
/// shrunk by a few ulps if rounding would leave the result outside, so the
/// output always satisfies `dist2(result, center) <= radius` as computed here
/// and a second projection is a bit-identical no-op.
pub fn l2_project_to_ball(v: &[f64], center: &[f64], radius: f64) -> Result<Vec<f64>> {
    check_len(center.len(), v.len())?;
    let mut out = v.to_vec();
    project_in_place(&mut out, center, radius)?;
    Ok(out)
}

/// In-place variant of [`l2_project_to_ball`]. Returns `true` if `v` moved.
pub fn project_in_place(v: &mut [f64], center: &[f64], radius: f64) -> Result<bool> {
    check_len(center.len(), v.len())?;
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument("projection radius must be non-negative"));
    }
    let dist = dist2_unchecked(v, center);
    if dist <= radius {
        return Ok(false);
    }
    if radius == 0.0 {
        v.copy_from_slice(center);
        return Ok(true);
    }
    let diff: Vec<f64> = v.iter().zip(center).map(|(a, c)| a - c).collect();
    let mut s = radius / dist;
    loop {
        for ((vi, ci), di) in v.iter_mut().zip(center).zip(&diff) {
            *vi = ci + s * di;
        }
        let got = dist2_unchecked(v, center);
        if got <= radius {
            return Ok(true);
        }
        s *= (radius / got) * (1.0 - 2.0 * f64::EPSILON);
    }
}

/// Dense `rows × cols` matrix stored column by column.
///
/// For network weights `rows = d` (input dimension) and `cols = m` (width), so
/// column `s` is the incoming weight vector of neuron `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds a matrix from column-major data.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::InvalidDimension { what: "matrix rows", value: rows });
        }
        if cols == 0 {
            return Err(Error::InvalidDimension { what: "matrix columns", value: cols });
        }
        check_len(rows * cols, data.len())?;
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn col(&self, s: usize) -> &[f64] {
        &self.data[s * self.rows..(s + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.data[s * self.rows..(s + 1) * self.rows]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.rows)
    }

    pub fn columns_mut(&mut self) -> impl ExactSizeIterator<Item = &mut [f64]> + '_ {
        self.data.chunks_exact_mut(self.rows)
    }

    /// Column-major backing storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `Wᵀx`, i.e. the inner product of every column with `x`.
    pub fn tr_mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, x.len())?;
        Ok(self.columns().map(|c| dot_unchecked(c, x)).collect())
    }

    pub fn scaled(&self, r: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: scale(r, &self.data) }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
