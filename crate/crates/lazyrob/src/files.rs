//! Binary formats: IDX input (plain or gzip), network checkpoints and
//! dataset caches. All multi-byte fields of the crate's own formats are
//! little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use lazyrob_core::data::{LabeledDataset, RawImageSet};
use lazyrob_core::{idx, Matrix, NetworkParams};

use crate::error::{CliError, CliResult};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LZRBCKPT";
pub const CACHE_MAGIC: &[u8; 8] = b"LZRBDATA";
pub const FORMAT_VERSION: u32 = 1;

/// Reads a file, inflating it when it starts with the gzip magic.
pub fn read_maybe_gz(path: &Path) -> CliResult<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&bytes[..]).read_to_end(&mut out).map_err(|e| CliError::io(path, e))?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

pub fn load_idx_pair(images: &Path, labels: &Path) -> CliResult<RawImageSet> {
    let img = read_maybe_gz(images)?;
    let lab = read_maybe_gz(labels)?;
    idx::parse_idx(&img, &lab).map_err(|e| CliError::Data(format!("{} / {}: {e}", images.display(), labels.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// A trained network with the seed and lazy constant it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams,
    pub seed: u64,
    pub c0: f64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {} (wanted {n} more)", self.at))?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "size field overflows usize".to_string())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, String> {
        let len = n.checked_mul(8).ok_or("payload size overflows")?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn header(&mut self, magic: &[u8; 8]) -> Result<(), String> {
        if self.take(8)? != magic {
            return Err("bad magic".into());
        }
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(format!("unsupported version {v}")),
        }
    }

    fn finish(&self) -> Result<(), String> {
        if self.at == self.bytes.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.bytes.len() - self.at))
        }
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

impl Checkpoint {
    /// `magic, version u32, d u64, m u64, seed u64, c0 f64, a: m × i8,
    /// W: d·m f64, W₀: d·m f64` (matrices column-major).
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.params;
        let mut out = Vec::with_capacity(44 + p.m() + 16 * p.d() * p.m());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(p.d() as u64).to_le_bytes());
        out.extend_from_slice(&(p.m() as u64).to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.c0.to_le_bytes());
        out.extend(p.a().iter().map(|&s| s as u8));
        put_f64s(&mut out, p.w().as_slice());
        put_f64s(&mut out, p.w0().as_slice());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, String> {
        let mut r = Reader { bytes, at: 0 };
        r.header(CHECKPOINT_MAGIC)?;
        let d = r.usize()?;
        let m = r.usize()?;
        let seed = r.u64()?;
        let c0 = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let a: Vec<i8> = r.take(m)?.iter().map(|&b| b as i8).collect();
        let dm = d.checked_mul(m).ok_or("d·m overflows")?;
        let w = r.f64s(dm)?;
        let w0 = r.f64s(dm)?;
        r.finish()?;
        let w = Matrix::from_col_major(d, m, w).map_err(|e| e.to_string())?;
        let w0 = Matrix::from_col_major(d, m, w0).map_err(|e| e.to_string())?;
        let params = NetworkParams::from_parts(a, w, w0).map_err(|e| e.to_string())?;
        Ok(Self { params, seed, c0 })
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// `magic, version u32, d u64, n u64, normalized u8, inputs: n·d f64, labels: n × i8`.
pub fn dataset_to_bytes(data: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(29 + 9 * data.inputs().len());
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(data.d() as u64).to_le_bytes());
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    out.push(data.normalized() as u8);
    put_f64s(&mut out, data.inputs());
    out.extend(data.labels().iter().map(|&y| y as u8));
    out
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<LabeledDataset, String> {
    let mut r = Reader { bytes, at: 0 };
    r.header(CACHE_MAGIC)?;
    let d = r.usize()?;
    let n = r.usize()?;
    let normalized = match r.take(1)?[0] {
        0 => false,
        1 => true,
        b => return Err(format!("bad normalized flag {b}")),
    };
    let inputs = r.f64s(n.checked_mul(d).ok_or("n·d overflows")?)?;
    let labels: Vec<i8> = r.take(n)?.iter().map(|&b| b as i8).collect();
    r.finish()?;
    LabeledDataset::new(d, inputs, labels, normalized).map_err(|e| e.to_string())
}

pub fn save_dataset(path: &Path, data: &LabeledDataset) -> CliResult<()> {
    write_atomic(path, &dataset_to_bytes(data))
}

pub fn load_dataset(path: &Path) -> CliResult<LabeledDataset> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    dataset_from_bytes(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
