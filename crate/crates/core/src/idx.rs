//! The IDX container used by the MNIST distribution: a big-endian magic,
//! big-endian `u32` dimensions, then a row-major `u8` payload.

use alloc::vec::Vec;

use crate::data::RawImageSet;
use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::IdxLength { expected: at + 4, found: bytes.len() })
}

fn payload(bytes: &[u8], header: usize, len: usize) -> Result<&[u8]> {
    let expected = header + len;
    if bytes.len() < expected {
        return Err(Error::IdxLength { expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::IdxFormat("trailing bytes after payload"));
    }
    Ok(&bytes[header..])
}

/// Decodes an image file into `(rows, cols, pixels)`.
pub fn parse_images(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    match be_u32(bytes, 0)? {
        IMAGE_MAGIC => {}
        LABEL_MAGIC => return Err(Error::IdxFormat("label magic 2049 in image file")),
        _ => return Err(Error::IdxFormat("bad image magic")),
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::IdxFormat("zero image side"));
    }
    let len =
        n.checked_mul(rows).and_then(|v| v.checked_mul(cols)).ok_or(Error::IdxFormat("image dimensions overflow"))?;
    Ok((rows, cols, payload(bytes, 16, len)?.to_vec()))
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    match be_u32(bytes, 0)? {
        LABEL_MAGIC => {}
        IMAGE_MAGIC => return Err(Error::IdxFormat("image magic 2051 in label file")),
        _ => return Err(Error::IdxFormat("bad label magic")),
    }
    let n = be_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, n)?.to_vec())
}

/// Decodes a matching image/label pair.
pub fn parse_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<RawImageSet> {
    let (rows, cols, pixels) = parse_images(image_bytes)?;
    let labels = parse_labels(label_bytes)?;
    let images = pixels.len() / (rows * cols);
    if images != labels.len() {
        return Err(Error::IdxCountMismatch { images, labels: labels.len() });
    }
    RawImageSet::new(rows, cols, pixels.into_iter().map(f64::from).collect(), labels)
}

/// Encodes the images of `raw`; every pixel must be an integer in `0..=255`.
pub fn encode_images(raw: &RawImageSet) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + raw.pixels().len());
    for v in [IMAGE_MAGIC, raw.len() as u32, raw.rows() as u32, raw.cols() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for &p in raw.pixels() {
        if !(0.0..=255.0).contains(&p) || p != libm::round(p) {
            return Err(Error::InvalidArgument("IDX pixels must be integers in 0..=255"));
        }
        out.push(p as u8);
    }
    Ok(out)
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // two 2×2 images: 16-byte header + 8 pixels = 24 bytes; labels 8 + 2 = 10
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 17, 3, 9, 8, 128, 1]);
        let lab = vec![0, 0, 8, 1, 0, 0, 0, 2, 1, 0];
        (img, lab)
    }

    #[test]
    fn fixture_decodes_exactly() {
        let (img, lab) = fixture();
        let raw = parse_idx(&img, &lab).unwrap();
        assert_eq!((raw.len(), raw.rows(), raw.cols()), (2, 2, 2));
        assert_eq!(raw.image(0), &[0.0, 255.0, 17.0, 3.0]);
        assert_eq!(raw.image(1), &[9.0, 8.0, 128.0, 1.0]);
        assert_eq!(raw.labels(), &[1, 0]);
        assert_eq!(encode_images(&raw).unwrap(), img);
        assert_eq!(encode_labels(raw.labels()), lab);
    }

    #[test]
    fn magic_errors() {
        let (img, lab) = fixture();
        assert!(matches!(parse_labels(&img), Err(Error::IdxFormat(_))));
        assert!(matches!(parse_images(&lab), Err(Error::IdxFormat(_))));
        let mut bad = img.clone();
        bad[3] = 7;
        assert!(matches!(parse_images(&bad), Err(Error::IdxFormat(_))));
    }

    #[test]
    fn truncation_and_count_errors() {
        let (img, _) = fixture();
        assert!(matches!(parse_images(&img[..20]), Err(Error::IdxLength { expected: 24, found: 20 })));
        assert!(matches!(parse_images(&img[..6]), Err(Error::IdxLength { .. })));
        let one_label = vec![0, 0, 8, 1, 0, 0, 0, 1, 1];
        assert_eq!(parse_idx(&img, &one_label), Err(Error::IdxCountMismatch { images: 2, labels: 1 }));
        let bad_digit = vec![0, 0, 8, 1, 0, 0, 0, 2, 1, 12];
        assert!(parse_idx(&img, &bad_digit).is_err());
    }
}
