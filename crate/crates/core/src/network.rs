//! Two-layer ReLU network with a frozen sign layer.
//!
//! `f(x; a, W) = m^{-1/2} Σ_s a_s · max(0, w_sᵀx)` with `a_s ∈ {−1, +1}` fixed
//! at initialisation and no biases. `W` is `d × m`, stored column-major so that
//! every per-neuron loop walks contiguous memory. A copy of the initial weights
//! `W₀` travels with the parameters; the lazy regime is the ball
//! `{W : max_s ‖w_s − w_{s,0}‖ ≤ radius}`.
//!
//! The ReLU subgradient at the kink is taken to be 0.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{axpy_in_place, dist2_unchecked, dot_unchecked, project_in_place, Matrix};
use crate::rng::{sample_gaussian_vec, sample_sign_vec, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    a: Vec<i8>,
    w: Matrix,
    w0: Matrix,
}

/// Radius of the lazy ball, `C₀/√m` or a free radius `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LazyBudget {
    pub c0: f64,
    pub radius: f64,
}

impl LazyBudget {
    /// `radius = c0 / √m`.
    pub fn from_c0(c0: f64, m: usize) -> Result<Self> {
        if !(c0 >= 0.0) || !c0.is_finite() {
            return Err(Error::InvalidArgument("C0 must be finite and non-negative"));
        }
        if m == 0 {
            return Err(Error::InvalidDimension { what: "network width", value: m });
        }
        Ok(Self { c0, radius: c0 / libm::sqrt(m as f64) })
    }

    /// A free radius `V`; `c0` is reported as `V·√m`.
    pub fn from_radius(radius: f64, m: usize) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument("lazy radius must be finite and non-negative"));
        }
        Ok(Self { c0: radius * libm::sqrt(m as f64), radius })
    }
}

#[inline]
fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// Numerically stable `ln(1 + e^{-t})`.
#[inline]
pub fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        libm::log1p(libm::exp(-t))
    } else {
        -t + libm::log1p(libm::exp(t))
    }
}

/// Logistic sigmoid `1 / (1 + e^{-t})`.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

pub(crate) fn check_label(y: i8) -> Result<()> {
    if y == 1 || y == -1 {
        Ok(())
    } else {
        Err(Error::InvalidLabel(y as i64))
    }
}

/// Draws `a` and `W₀` and returns parameters with `W = W₀`.
///
/// All `m` signs are drawn first, then the columns of `W₀` one after another.
pub fn init_network(rng: &mut Rng, d: usize, m: usize) -> Result<NetworkParams> {
    if d == 0 {
        return Err(Error::InvalidDimension { what: "input dimension", value: d });
    }
    let a = sample_sign_vec(rng, m)?;
    let mut data = Vec::with_capacity(d * m);
    for _ in 0..m {
        data.extend(sample_gaussian_vec(rng, d)?);
    }
    let w0 = Matrix::from_col_major(d, m, data)?;
    Ok(NetworkParams { a, w: w0.clone(), w0 })
}

impl NetworkParams {
    /// Assembles parameters from stored parts (e.g. a checkpoint).
    pub fn from_parts(a: Vec<i8>, w: Matrix, w0: Matrix) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidDimension { what: "network width", value: 0 });
        }
        if w.cols() != a.len() {
            return Err(Error::DimensionMismatch { expected: a.len(), found: w.cols() });
        }
        if w0.rows() != w.rows() || w0.cols() != w.cols() {
            return Err(Error::DimensionMismatch { expected: w.rows() * w.cols(), found: w0.rows() * w0.cols() });
        }
        if a.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("top-layer entries must be -1 or +1"));
        }
        if !w.is_finite() || !w0.is_finite() {
            return Err(Error::InvalidArgument("weights must be finite"));
        }
        Ok(Self { a, w, w0 })
    }

    pub fn d(&self) -> usize {
        self.w.rows()
    }

    pub fn m(&self) -> usize {
        self.w.cols()
    }

    pub fn a(&self) -> &[i8] {
        &self.a
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub(crate) fn w_mut(&mut self) -> &mut Matrix {
        &mut self.w
    }

    #[inline]
    pub(crate) fn inv_sqrt_m(&self) -> f64 {
        1.0 / libm::sqrt(self.m() as f64)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.d() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.d(), found: x.len() })
        }
    }

    /// Pre-activations `w_sᵀx` for every neuron.
    pub fn preactivations(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.w.tr_mul_vec(x)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (col, &a) in self.w.columns().zip(&self.a) {
            acc += a as f64 * relu(dot_unchecked(col, x));
        }
        acc * self.inv_sqrt_m()
    }

    /// `∇ₓf(x) = m^{-1/2} Σ_s a_s · 1[w_sᵀx > 0] · w_s`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_and_gradient(x)?.1)
    }

    /// `(f(x), ∇ₓf(x))` in one sweep over the neurons.
    pub fn forward_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let mut grad = vec![0.0; self.d()];
        let f = self.forward_and_gradient_into(x, &mut grad);
        Ok((f, grad))
    }

    pub(crate) fn forward_and_gradient_into(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut acc = 0.0;
        for (col, &a) in self.w.columns().zip(&self.a) {
            let z = dot_unchecked(col, x);
            if z > 0.0 {
                acc += a as f64 * z;
                axpy_in_place(a as f64, col, grad);
            }
        }
        let k = self.inv_sqrt_m();
        grad.iter_mut().for_each(|g| *g *= k);
        acc * k
    }

    /// `ln(1 + exp(−y f(x)))`.
    pub fn logistic_loss(&self, x: &[f64], y: i8) -> Result<f64> {
        check_label(y)?;
        Ok(softplus_neg(y as f64 * self.forward(x)?))
    }

    /// Gradient of the mean logistic loss over `batch` with respect to `W`.
    ///
    /// Column `s` is `mean_i[ −y_i σ(−y_i f(x_i)) a_s 1[w_sᵀx_i > 0] x_i ] / √m`.
    pub fn weight_gradient<'a, I>(&self, batch: I) -> Result<Matrix>
    where
        I: IntoIterator<Item = (&'a [f64], i8)>,
    {
        let (grad, _, n) = self.weight_gradient_and_loss(batch)?;
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(grad)
    }

    /// Mean-loss gradient, the summed loss, and the batch size.
    pub(crate) fn weight_gradient_and_loss<'a, I>(&self, batch: I) -> Result<(Matrix, f64, usize)>
    where
        I: IntoIterator<Item = (&'a [f64], i8)>,
    {
        let (d, m) = (self.d(), self.m());
        let mut grad = Matrix::zeros(d, m);
        let mut z = vec![0.0; m];
        let mut loss = 0.0;
        let mut n = 0usize;
        let k = self.inv_sqrt_m();
        for (x, y) in batch {
            self.check_input(x)?;
            check_label(y)?;
            let mut f = 0.0;
            for ((zs, col), &a) in z.iter_mut().zip(self.w.columns()).zip(&self.a) {
                *zs = dot_unchecked(col, x);
                f += a as f64 * relu(*zs);
            }
            f *= k;
            let yf = y as f64 * f;
            loss += softplus_neg(yf);
            let coef = -(y as f64) * sigmoid(-yf) * k;
            for ((gcol, &zs), &a) in grad.columns_mut().zip(&z).zip(&self.a) {
                if zs > 0.0 {
                    axpy_in_place(coef * a as f64, x, gcol);
                }
            }
            n += 1;
        }
        if n > 0 {
            let inv = 1.0 / n as f64;
            grad.as_mut_slice().iter_mut().for_each(|g| *g *= inv);
        }
        Ok((grad, loss, n))
    }

    /// `‖W − W₀‖₂,∞ = max_s ‖w_s − w_{s,0}‖`.
    pub fn lazy_deviation(&self) -> f64 {
        self.w.columns().zip(self.w0.columns()).map(|(w, w0)| dist2_unchecked(w, w0)).fold(0.0, f64::max)
    }

    /// Projects every column onto `B(w_{s,0}, radius)`.
    pub fn project_weights(&self, radius: f64) -> Result<Self> {
        let mut out = self.clone();
        out.project_weights_in_place(radius)?;
        Ok(out)
    }

    pub(crate) fn project_weights_in_place(&mut self, radius: f64) -> Result<()> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument("projection radius must be non-negative"));
        }
        let Self { w, w0, .. } = self;
        for (col, c0) in w.columns_mut().zip(w0.columns()) {
            project_in_place(col, c0, radius)?;
        }
        Ok(())
    }

    /// `W ← rW` for `r > 0`; the prediction sign is unchanged.
    pub fn cone_scale(&self, r: f64) -> Result<Self> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidArgument("cone scale factor must be positive"));
        }
        Ok(Self { a: self.a.clone(), w: self.w.scaled(r), w0: self.w0.clone() })
    }

    /// Classification accuracy of `sign(f)` (with `f = 0` counted as wrong).
    pub fn accuracy<'a, I>(&self, samples: I) -> f64
    where
        I: IntoIterator<Item = (&'a [f64], i8)>,
    {
        let mut hits = 0usize;
        let mut n = 0usize;
        for (x, y) in samples {
            if y as f64 * self.forward_unchecked(x) > 0.0 {
                hits += 1;
            }
            n += 1;
        }
        if n == 0 {
            0.0
        } else {
            hits as f64 / n as f64
        }
    }
}
