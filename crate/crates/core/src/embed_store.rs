//! Sentence-embedding matrices, the SEMB binary format, PCA and L2 normalization.
//!
//! SEMB layout (little-endian):
//!
//! ```text
//! magic    "SEMB"     4 bytes
//! version  u32 = 1
//! dim      u32
//! count    u64
//! payload  count * dim f32, row-major
//! ```
//!
//! A collection is stored either as one `<doc_id>.semb` file per document in a
//! directory, or as a single container file whose rows are the documents'
//! rows back to back, plus a `<name>.semb.idx` JSON sidecar mapping each
//! doc id to `[row_start, row_count]`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SEMB_MAGIC: &[u8; 4] = b"SEMB";
pub const SEMB_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub const DEFAULT_PCA_DIM: usize = 128;
const NORM_EPS: f64 = 1e-12;

/// Row-major `count x dim` matrix of 32-bit floats; row `i` belongs to sentence `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dim must be positive".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::LengthMismatch {
                expected: values.len() / dim * dim,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(EmbeddingMatrix { dim, values })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    actual: r.len(),
                });
            }
            values.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(dim, values)
    }

    pub fn zeros(dim: usize, count: usize) -> Result<Self> {
        Self::new(dim, vec![0.0; dim * count])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    /// Row `i` widened to f64.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Rows `start..start + len` as a new matrix.
    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.count() {
            return Err(Error::Validation(format!(
                "row range {}..{} exceeds {} rows",
                start,
                start + len,
                self.count()
            )));
        }
        Ok(EmbeddingMatrix {
            dim: self.dim,
            values: self.values[start * self.dim..(start + len) * self.dim].to_vec(),
        })
    }

    /// Stacks matrices of equal dim vertically.
    pub fn vstack<'a>(parts: impl IntoIterator<Item = &'a EmbeddingMatrix>) -> Result<Self> {
        let mut dim = None;
        let mut values = Vec::new();
        for m in parts {
            match dim {
                None => dim = Some(m.dim),
                Some(d) if d != m.dim => {
                    return Err(Error::DimMismatch {
                        expected: d,
                        actual: m.dim,
                    })
                }
                _ => {}
            }
            values.extend_from_slice(&m.values);
        }
        Self::new(dim.unwrap_or(0), values)
    }

    pub fn to_semb_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(SEMB_MAGIC);
        out.extend_from_slice(&SEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.count() as u64).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_semb_bytes(bytes: &[u8]) -> Result<Self> {
        let fmt = |offset: usize, message: &str| Error::Format {
            offset: offset as u64,
            message: message.to_string(),
        };
        if bytes.len() < HEADER_LEN {
            return Err(fmt(bytes.len(), "truncated header"));
        }
        if &bytes[0..4] != SEMB_MAGIC {
            return Err(fmt(0, "bad magic, expected SEMB"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != SEMB_VERSION {
            return Err(fmt(4, &format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        if dim == 0 {
            return Err(Error::Validation("SEMB header has dim = 0".into()));
        }
        let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let payload_len = (count as u128) * (dim as u128) * 4;
        let available = (bytes.len() - HEADER_LEN) as u128;
        if payload_len > available {
            return Err(fmt(bytes.len(), "truncated payload"));
        }
        if payload_len < available {
            return Err(fmt(HEADER_LEN + payload_len as usize, "trailing bytes after payload"));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at byte {}",
                HEADER_LEN + pos * 4
            )));
        }
        Ok(EmbeddingMatrix { dim, values })
    }
}

pub fn write_semb(path: impl AsRef<Path>, m: &EmbeddingMatrix) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_semb_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_semb(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingMatrix::from_semb_bytes(&bytes)
}

pub fn index_path(container: &Path) -> PathBuf {
    let mut name = container.as_os_str().to_owned();
    name.push(".idx");
    PathBuf::from(name)
}

/// Writes a container file plus its `.idx` sidecar. Every matrix must share one dim.
pub fn store_embeddings(map: &BTreeMap<String, EmbeddingMatrix>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let stacked = EmbeddingMatrix::vstack(map.values())?;
    let mut index = BTreeMap::new();
    let mut start = 0usize;
    for (id, m) in map {
        index.insert(id.clone(), (start, m.count()));
        start += m.count();
    }
    write_semb(path, &stacked)?;
    let idx = index_path(path);
    let mut f = fs::File::create(&idx).map_err(|e| Error::io(&idx, e))?;
    serde_json::to_writer_pretty(&mut f, &index)?;
    f.write_all(b"\n").map_err(|e| Error::io(&idx, e))
}

/// Writes one `<doc_id>.semb` per document into `dir`.
pub fn store_embeddings_dir(map: &BTreeMap<String, EmbeddingMatrix>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, m) in map {
        write_semb(dir.join(format!("{id}.semb")), m)?;
    }
    Ok(())
}

/// Loads a collection from a container (with sidecar index) or a directory
/// of per-document files.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<BTreeMap<String, EmbeddingMatrix>> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut map = BTreeMap::new();
        for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
            let entry = entry.map_err(|e| Error::io(path, e))?;
            let p = entry.path();
            if p.extension().and_then(|e| e.to_str()) == Some("semb") {
                let id = p.file_stem().unwrap().to_string_lossy().into_owned();
                map.insert(id, read_semb(&p)?);
            }
        }
        return Ok(map);
    }
    let stacked = read_semb(path)?;
    let idx = index_path(path);
    let text = fs::read_to_string(&idx).map_err(|e| Error::io(&idx, e))?;
    let index: BTreeMap<String, (usize, usize)> = serde_json::from_str(&text)?;
    index
        .into_iter()
        .map(|(id, (start, len))| Ok((id, stacked.slice_rows(start, len)?)))
        .collect()
}

/// Returns `v / ||v||`; vectors with norm at or below 1e-12 are returned unchanged.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    l2_normalize_in_place(&mut out);
    out
}

/// In-place variant of [`l2_normalize`]. Returns the original norm.
pub fn l2_normalize_in_place(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > NORM_EPS {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k x d`, row-major, rows orthonormal and sorted by explained variance.
    pub components: Vec<f64>,
    pub explained_variance: Vec<f64>,
    pub k: usize,
    pub d: usize,
}

impl PcaModel {
    pub fn component(&self, i: usize) -> &[f64] {
        &self.components[i * self.d..(i + 1) * self.d]
    }

    pub fn project(&self, row: &[f32]) -> Result<Vec<f64>> {
        if row.len() != self.d {
            return Err(Error::DimMismatch {
                expected: self.d,
                actual: row.len(),
            });
        }
        let centered: Vec<f64> = row.iter().zip(&self.mean).map(|(&x, m)| x as f64 - m).collect();
        Ok((0..self.k)
            .map(|i| self.component(i).iter().zip(&centered).map(|(c, x)| c * x).sum())
            .collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Fits the top-`k` principal directions of the mean-centred pool from the
/// sample covariance (n - 1 denominator). No whitening. Each component's
/// largest-magnitude entry is made positive so the result is deterministic.
pub fn pca_fit(pool: &EmbeddingMatrix, k: usize) -> Result<PcaModel> {
    let d = pool.dim();
    let n = pool.count();
    if k == 0 || k > d {
        return Err(Error::InvalidParameter(format!("PCA needs 1 <= k <= dim ({d}), got {k}")));
    }
    if n < k || n < 2 {
        return Err(Error::InsufficientSamples {
            needed: k.max(2),
            available: n,
        });
    }
    let mut mean = vec![0.0f64; d];
    for row in pool.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut centered = vec![0.0f64; d];
    for row in pool.rows() {
        for ((c, &x), m) in centered.iter_mut().zip(row).zip(&mean) {
            *c = x as f64 - m;
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            for j in i..d {
                cov[(i, j)] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(k * d);
    let mut explained_variance = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        let col = eig.eigenvectors.column(idx);
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| v * sign));
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        k,
        d,
    })
}

pub fn pca_apply(model: &PcaModel, m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if m.dim() != model.d {
        return Err(Error::DimMismatch {
            expected: model.d,
            actual: m.dim(),
        });
    }
    let mut values = Vec::with_capacity(m.count() * model.k);
    for row in m.rows() {
        values.extend(model.project(row)?.into_iter().map(|v| v as f32));
    }
    EmbeddingMatrix::new(model.k, values)
}
