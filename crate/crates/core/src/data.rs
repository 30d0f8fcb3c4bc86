//! Datasets: greyscale image sets and labelled vectors on the sphere.

use alloc::vec::Vec;

use crate::linalg::norm2;
use crate::rng::Rng;
use crate::{Error, Result};

/// Greyscale images on the 0–255 intensity scale with digit labels.
///
/// Pixels are stored row-major, image after image. Values parsed from IDX
/// files are integral; area downsampling may produce fractional values.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImageSet {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    labels: Vec<u8>,
}

impl RawImageSet {
    pub fn new(rows: usize, cols: usize, pixels: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidDimension { what: "image side", value: rows.min(cols) });
        }
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::DimensionMismatch { expected: rows * cols * labels.len(), found: pixels.len() });
        }
        if labels.iter().any(|&l| l > 9) {
            return Err(Error::InvalidArgument("digit labels must be in 0..=9"));
        }
        Ok(Self { rows, cols, pixels, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Keeps the images labelled `pos_digit` or `neg_digit`, in order.
pub fn extract_binary(raw: &RawImageSet, pos_digit: u8, neg_digit: u8) -> Result<RawImageSet> {
    if pos_digit == neg_digit || pos_digit > 9 || neg_digit > 9 {
        return Err(Error::InvalidArgument("digits must be distinct and in 0..=9"));
    }
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for (i, &l) in raw.labels.iter().enumerate() {
        if l == pos_digit || l == neg_digit {
            pixels.extend_from_slice(raw.image(i));
            labels.push(l);
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    RawImageSet::new(raw.rows, raw.cols, pixels, labels)
}

/// Source-interval overlaps for resampling `src` cells onto `k` cells.
/// Entry `(o, s, w)` means output cell `o` takes weight `w` from source cell `s`.
fn overlap_weights(src: usize, k: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    // work in units of 1/(src·k) so that every boundary is an integer
    for o in 0..k {
        let lo = o * src;
        let hi = (o + 1) * src;
        let first = lo / k;
        let last = (hi - 1) / k;
        for s in first..=last {
            let a = lo.max(s * k);
            let b = hi.min((s + 1) * k);
            if b > a {
                out.push((o, s, (b - a) as f64 / src as f64));
            }
        }
    }
    out
}

/// Area-averaging resize to `k × k`: every output pixel is the mean of the
/// (fractional) source rectangle it covers. `k` equal to the source side is the
/// identity.
pub fn downsample(raw: &RawImageSet, k: usize) -> Result<RawImageSet> {
    if k == 0 || k > raw.rows || k > raw.cols {
        return Err(Error::InvalidArgument("downsample side must be in 1..=source side"));
    }
    if k == raw.rows && k == raw.cols {
        return Ok(raw.clone());
    }
    let wr = overlap_weights(raw.rows, k);
    let wc = overlap_weights(raw.cols, k);
    let mut pixels = Vec::with_capacity(raw.len() * k * k);
    let mut tmp = alloc::vec![0.0; k * raw.cols];
    let mut out = alloc::vec![0.0; k * k];
    for i in 0..raw.len() {
        let img = raw.image(i);
        tmp.iter_mut().for_each(|v| *v = 0.0);
        for &(o, s, w) in &wr {
            for c in 0..raw.cols {
                tmp[o * raw.cols + c] += w * img[s * raw.cols + c];
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..k {
            for &(o, s, w) in &wc {
                out[r * k + o] += w * tmp[r * raw.cols + s];
            }
        }
        pixels.extend_from_slice(&out);
    }
    RawImageSet::new(k, k, pixels, raw.labels.clone())
}

/// Labelled inputs in `ℝ^d` with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    d: usize,
    inputs: Vec<f64>,
    labels: Vec<i8>,
    normalized: bool,
}

impl LabeledDataset {
    pub fn new(d: usize, inputs: Vec<f64>, labels: Vec<i8>, normalized: bool) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension { what: "input dimension", value: d });
        }
        if inputs.len() != d * labels.len() {
            return Err(Error::DimensionMismatch { expected: d * labels.len(), found: inputs.len() });
        }
        for &y in &labels {
            crate::network::check_label(y)?;
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("inputs must be finite"));
        }
        Ok(Self { d, inputs, labels, normalized })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.d..(i + 1) * self.d]
    }

    pub fn y(&self, i: usize) -> i8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = (&[f64], i8)> + '_ {
        self.inputs.chunks_exact(self.d).zip(self.labels.iter().copied())
    }

    /// Same inputs, labels replaced.
    pub fn with_labels(&self, labels: Vec<i8>) -> Result<Self> {
        Self::new(self.d, self.inputs.clone(), labels, self.normalized)
    }

    /// The first `n` examples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            d: self.d,
            inputs: self.inputs[..n * self.d].to_vec(),
            labels: self.labels[..n].to_vec(),
            normalized: self.normalized,
        }
    }
}

/// Result of [`to_sphere_dataset`]: the dataset and the number of all-zero
/// images dropped during normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereConversion {
    pub dataset: LabeledDataset,
    pub dropped: usize,
}

/// Flattens images, scales pixels to `[0, 1]`, maps `neg_digit → −1` and every
/// other digit to `+1`, and optionally rescales each input to unit norm.
/// All-zero images cannot be normalised and are dropped (and counted).
pub fn to_sphere_dataset(raw: &RawImageSet, neg_digit: u8, normalize: bool) -> Result<SphereConversion> {
    if raw.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = raw.rows * raw.cols;
    let mut inputs = Vec::with_capacity(raw.pixels.len());
    let mut labels = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for i in 0..raw.len() {
        let start = inputs.len();
        inputs.extend(raw.image(i).iter().map(|p| p / 255.0));
        if normalize {
            let n = norm2(&inputs[start..]);
            if n == 0.0 {
                inputs.truncate(start);
                dropped += 1;
                continue;
            }
            inputs[start..].iter_mut().for_each(|v| *v /= n);
        }
        labels.push(if raw.labels[i] == neg_digit { -1 } else { 1 });
    }
    if labels.is_empty() {
        return Err(Error::DegenerateInput("every image is all-zero"));
    }
    Ok(SphereConversion { dataset: LabeledDataset::new(d, inputs, labels, normalize)?, dropped })
}

/// Two unit-norm classes separated along `μ = e₁`.
///
/// Example `i` has label `+1` for even `i`, `−1` for odd `i`, and input
/// `y·margin·μ + √(1 − margin²)·g` where `g` is a uniformly random unit vector
/// orthogonal to `μ`. Every point therefore sits at distance exactly `margin`
/// from the hyperplane `μᵀx = 0`.
pub fn synth_sphere(rng: &mut Rng, d: usize, n: usize, margin: f64) -> Result<LabeledDataset> {
    if d < 2 {
        return Err(Error::InvalidDimension { what: "synthetic input dimension", value: d });
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidArgument("margin must lie in [0, 1)"));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let spread = libm::sqrt(1.0 - margin * margin);
    let mut inputs = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y: i8 = if i % 2 == 0 { 1 } else { -1 };
        let g = rng.unit_vector(d - 1)?;
        let mut x = Vec::with_capacity(d);
        x.push(y as f64 * margin);
        x.extend(g.iter().map(|v| spread * v));
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        inputs.extend(x);
        labels.push(y);
    }
    LabeledDataset::new(d, inputs, labels, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(rows: usize, cols: usize, pixels: Vec<f64>, labels: Vec<u8>) -> RawImageSet {
        RawImageSet::new(rows, cols, pixels, labels).unwrap()
    }

    #[test]
    fn extract_keeps_order_and_rejects_empty() {
        let raw = set(1, 1, vec![10.0, 20.0, 30.0, 40.0], vec![3, 1, 0, 1]);
        let b = extract_binary(&raw, 1, 0).unwrap();
        assert_eq!(b.labels(), &[1, 0, 1]);
        assert_eq!(b.pixels(), &[20.0, 30.0, 40.0]);
        let none = set(1, 1, vec![1.0, 2.0], vec![5, 7]);
        assert_eq!(extract_binary(&none, 1, 0), Err(Error::EmptyDataset));
        assert!(extract_binary(&raw, 1, 1).is_err());
    }

    #[test]
    fn downsample_examples() {
        let img = set(2, 2, vec![0.0, 255.0, 0.0, 255.0], vec![1]);
        let one = downsample(&img, 1).unwrap();
        assert_eq!(one.pixels(), &[127.5]);

        let c = set(28, 28, vec![100.0; 784], vec![0]);
        for k in [5, 7, 10, 14, 20, 25, 28] {
            let o = downsample(&c, k).unwrap();
            assert_eq!(o.rows(), k);
            assert!(o.pixels().iter().all(|&p| (p - 100.0).abs() < 1e-12), "k={k}");
        }

        let ramp: Vec<f64> = (0..784).map(|v| (v % 251) as f64).collect();
        let r = set(28, 28, ramp, vec![4]);
        assert_eq!(downsample(&r, 28).unwrap(), r);
        assert!(downsample(&r, 0).is_err());
        assert!(downsample(&r, 29).is_err());
    }

    #[test]
    fn downsample_preserves_total_mass() {
        let mut rng = Rng::new(8);
        let px: Vec<f64> = (0..28 * 28).map(|_| (rng.below(256)) as f64).collect();
        let r = set(28, 28, px.clone(), vec![2]);
        let total: f64 = px.iter().sum::<f64>() / 784.0;
        for k in [5, 10, 25] {
            let o = downsample(&r, k).unwrap();
            let mean: f64 = o.pixels().iter().sum::<f64>() / (k * k) as f64;
            assert!((mean - total).abs() < 1e-9);
        }
    }

    #[test]
    fn sphere_conversion() {
        let raw = set(1, 1, vec![255.0, 0.0, 51.0], vec![1, 0, 0]);
        let c = to_sphere_dataset(&raw, 0, true).unwrap();
        assert_eq!(c.dropped, 1);
        assert_eq!(c.dataset.len(), 2);
        assert_eq!(c.dataset.x(0), &[1.0]);
        assert_eq!(c.dataset.labels(), &[1, -1]);
        assert_eq!(c.dataset.x(1), &[1.0]);

        let u = to_sphere_dataset(&raw, 0, false).unwrap();
        assert_eq!(u.dropped, 0);
        assert_eq!(u.dataset.x(2), &[0.2]);

        let img = set(14, 14, vec![3.0; 196], vec![1]);
        assert_eq!(to_sphere_dataset(&img, 0, true).unwrap().dataset.d(), 196);

        let zeros = set(1, 2, vec![0.0, 0.0], vec![1]);
        assert!(matches!(to_sphere_dataset(&zeros, 0, true), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn synth_sphere_is_unit_norm_and_balanced() {
        let ds = synth_sphere(&mut Rng::new(1), 50, 2000, 0.9).unwrap();
        let pos = ds.labels().iter().filter(|&&y| y == 1).count();
        assert_eq!(pos, 1000);
        let mut correct = 0;
        for (x, y) in ds.iter() {
            assert!((norm2(x) - 1.0).abs() <= 1e-12);
            if (x[0] > 0.0) == (y == 1) {
                correct += 1;
            }
        }
        assert!(correct as f64 / 2000.0 >= 0.99);
        assert!(synth_sphere(&mut Rng::new(1), 1, 10, 0.5).is_err());
        assert!(synth_sphere(&mut Rng::new(1), 5, 10, 1.0).is_err());
        assert!(synth_sphere(&mut Rng::new(1), 5, 10, -0.1).is_err());
    }

    #[test]
    fn zero_margin_classes_match() {
        // two-sample comparison of the per-coordinate class means
        let ds = synth_sphere(&mut Rng::new(2), 20, 4000, 0.0).unwrap();
        let mut diff = [0.0f64; 20];
        for (x, y) in ds.iter() {
            for (dv, xv) in diff.iter_mut().zip(x) {
                *dv += y as f64 * xv / 2000.0;
            }
        }
        // per-coordinate std of a class mean is ~ 1/sqrt(20·2000)
        let tol = 5.0 * libm::sqrt(2.0 / (20.0 * 2000.0));
        assert!(diff.iter().all(|v| v.abs() < tol), "{diff:?}");
    }
}
