//! `CBT1` tensor container and the JSON network manifest.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CBT1"
//! repeat until EOF:
//!     u32 name_len, name bytes (UTF-8)
//!     u32 ndim, ndim × u32 dims
//!     u8 dtype (0 = f64le, 1 = f32le)
//!     payload: product(dims) × dtype size bytes, row-major
//! ```
//!
//! Payload bytes are stored verbatim; f32 tensors are widened to f64 only by
//! [`TensorEntry::to_f64_vec`], which is exact.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CBT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F64le,
    F32le,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F64le => 0,
            DType::F32le => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F64le),
            1 => Some(DType::F32le),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F64le => 8,
            DType::F32le => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorEntry {
    pub name: String,
    pub dims: Vec<u32>,
    pub dtype: DType,
    pub payload: Vec<u8>,
}

impl TensorEntry {
    pub fn from_f64(name: impl Into<String>, dims: Vec<u32>, values: &[f64]) -> Self {
        let payload = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorEntry {
            name: name.into(),
            dims,
            dtype: DType::F64le,
            payload,
        }
    }

    pub fn from_f32(name: impl Into<String>, dims: Vec<u32>, values: &[f32]) -> Self {
        let payload = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        TensorEntry {
            name: name.into(),
            dims,
            dtype: DType::F32le,
            payload,
        }
    }

    /// Row-major matrix as a 2-D f64 tensor.
    pub fn from_matrix(name: impl Into<String>, m: &DMatrix<f64>) -> Self {
        let values: Vec<f64> = m.transpose().iter().copied().collect();
        Self::from_f64(name, vec![m.nrows() as u32, m.ncols() as u32], &values)
    }

    pub fn element_count(&self) -> usize {
        self.dims.iter().map(|&d| d as usize).product()
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.element_count() * self.dtype.size();
        if self.payload.len() != expected {
            return Err(Error::Validation(format!(
                "tensor {:?}: payload has {} bytes, dims {:?} require {}",
                self.name,
                self.payload.len(),
                self.dims,
                expected
            )));
        }
        Ok(())
    }

    /// Values in row-major order, widened exactly to f64.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self.dtype {
            DType::F64le => self
                .payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            DType::F32le => self
                .payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>> {
        if self.dims.len() != 2 {
            return Err(Error::Dimension(format!(
                "tensor {:?} has dims {:?}, expected a matrix",
                self.name, self.dims
            )));
        }
        let (r, c) = (self.dims[0] as usize, self.dims[1] as usize);
        Ok(DMatrix::from_row_slice(r, c, &self.to_f64_vec()))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub entries: Vec<TensorEntry>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TensorEntry) {
        self.entries.push(entry);
    }

    pub fn get(&self, name: &str) -> Option<&TensorEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&TensorEntry> {
        self.get(name)
            .ok_or_else(|| Error::Manifest(format!("tensor {name:?} not found in tensor file")))
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.name.as_str()) {
                return Err(Error::Validation(format!("duplicate tensor name {:?}", e.name)));
            }
            e.validate()?;
        }
        Ok(())
    }
}

pub fn encode(file: &TensorFile) -> Result<Vec<u8>> {
    file.validate()?;
    let mut out = Vec::with_capacity(
        4 + file
            .entries
            .iter()
            .map(|e| 9 + e.name.len() + 4 * e.dims.len() + e.payload.len())
            .sum::<usize>(),
    );
    out.extend_from_slice(MAGIC);
    for e in &file.entries {
        let name_len = u32::try_from(e.name.len())
            .map_err(|_| Error::Validation(format!("tensor name too long: {}", e.name.len())))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
        for d in &e.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(e.dtype.code());
        out.extend_from_slice(&e.payload);
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| Error::Truncated(what.to_string()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TensorFile> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        let got = &bytes[..bytes.len().min(4)];
        return Err(Error::Format(format!("bad magic {:?}", String::from_utf8_lossy(got))));
    }
    let mut cur = Cursor { buf: bytes, pos: 4 };
    let mut file = TensorFile::new();
    let mut seen = HashSet::new();
    while cur.pos < bytes.len() {
        let index = file.entries.len();
        let name_len = cur.u32(&format!("name length of entry #{index}"))? as usize;
        let name = std::str::from_utf8(cur.take(name_len, &format!("name of entry #{index}"))?)
            .map_err(|_| Error::Format(format!("entry #{index} name is not UTF-8")))?
            .to_string();
        let ndim = cur.u32(&format!("entry {name:?} header"))? as usize;
        let mut dims = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            dims.push(cur.u32(&format!("entry {name:?} header"))?);
        }
        let code = cur.take(1, &format!("entry {name:?} header"))?[0];
        let dtype = DType::from_code(code)
            .ok_or_else(|| Error::Format(format!("entry {name:?} has unknown dtype code {code}")))?;
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .and_then(|c| c.checked_mul(dtype.size()))
            .ok_or_else(|| Error::Format(format!("entry {name:?} dims overflow")))?;
        let payload = cur.take(count, &format!("payload of entry {name:?}"))?.to_vec();
        if !seen.insert(name.clone()) {
            return Err(Error::Validation(format!("duplicate tensor name {name:?}")));
        }
        file.push(TensorEntry {
            name,
            dims,
            dtype,
            payload,
        });
    }
    Ok(file)
}

pub fn write_tensor_file(path: impl AsRef<Path>, file: &TensorFile) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(file)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Dense,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub weight_tensor: String,
    pub in_width: usize,
    pub out_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter_size: Option<usize>,
}

impl LayerSpec {
    /// Expected weight tensor dims: dense `[out, in]`, conv `[out, in, k, k]`.
    pub fn weight_dims(&self) -> Result<Vec<u32>> {
        let (o, i) = (self.out_width as u32, self.in_width as u32);
        match self.kind {
            LayerKind::Dense => Ok(vec![o, i]),
            LayerKind::Conv => {
                let k = self.filter_size.ok_or_else(|| {
                    Error::Manifest(format!("conv layer {:?} has no filter_size", self.name))
                })? as u32;
                Ok(vec![o, i, k, k])
            }
        }
    }

    pub fn filter_area(&self) -> usize {
        match self.kind {
            LayerKind::Dense => 1,
            LayerKind::Conv => self.filter_size.unwrap_or(1).pow(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub layers: Vec<LayerSpec>,
    /// Layer name → tensor holding that layer's input activations
    /// (dense `[n, in]`, conv `[n, in, I, J]`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub activation_tensors: BTreeMap<String, String>,
    pub clip_level: f64,
    pub sample_count: usize,
    /// Tensor file path, relative to the manifest's directory.
    pub tensor_file: String,
    /// Dataset inputs `[n, in_width of layer 1]`, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tensor: Option<String>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Checks the manifest on its own: widths chain, `M ≥ 1`, `n ≥ 1`, unique names.
    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Manifest("manifest has no layers".into()));
        }
        if !(self.clip_level >= 1.0) || !self.clip_level.is_finite() {
            return Err(Error::Manifest(format!(
                "clip_level must be a finite value >= 1, got {}",
                self.clip_level
            )));
        }
        if self.sample_count == 0 {
            return Err(Error::Manifest("sample_count must be positive".into()));
        }
        let mut names = HashSet::new();
        for l in &self.layers {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Manifest(format!("duplicate layer name {:?}", l.name)));
            }
            if l.in_width == 0 || l.out_width == 0 {
                return Err(Error::Manifest(format!("layer {:?} has zero width", l.name)));
            }
            if l.kind == LayerKind::Conv && l.filter_size.unwrap_or(0) == 0 {
                return Err(Error::Manifest(format!(
                    "conv layer {:?} needs a positive filter_size",
                    l.name
                )));
            }
        }
        for pair in self.layers.windows(2) {
            if pair[0].out_width != pair[1].in_width {
                return Err(Error::Manifest(format!(
                    "width chain broken: layer {:?} out_width {} != layer {:?} in_width {}",
                    pair[0].name, pair[0].out_width, pair[1].name, pair[1].in_width
                )));
            }
        }
        for layer in self.activation_tensors.keys() {
            if !self.layers.iter().any(|l| &l.name == layer) {
                return Err(Error::Manifest(format!(
                    "activation tensor given for unknown layer {layer:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn activation_tensor(&self, layer: &str) -> Option<&str> {
        self.activation_tensors.get(layer).map(String::as_str)
    }

    pub fn is_dense(&self) -> bool {
        self.layers.iter().all(|l| l.kind == LayerKind::Dense)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = Manifest::from_json(&text)?;
    m.check()?;
    Ok(m)
}

/// Tensor file referenced by a manifest loaded from `manifest_path`.
pub fn tensor_path(manifest_path: &Path, manifest: &Manifest) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.tensor_file)
}

fn expect_dims(entry: &TensorEntry, expected: &[u32], what: &str) -> Result<()> {
    if entry.dims != expected {
        return Err(Error::Manifest(format!(
            "{what}: tensor {:?} has dims {:?}, expected {:?}",
            entry.name, entry.dims, expected
        )));
    }
    Ok(())
}

/// Cross-checks a manifest against the tensors it references.
pub fn validate_manifest(m: &Manifest, t: &TensorFile) -> Result<()> {
    m.check()?;
    t.validate()?;
    let n = m.sample_count as u32;
    for l in &m.layers {
        let w = t.require(&l.weight_tensor)?;
        expect_dims(w, &l.weight_dims()?, &format!("layer {:?} weight", l.name))?;
        if let Some(name) = m.activation_tensor(&l.name) {
            let a = t.require(name)?;
            let ok = match l.kind {
                LayerKind::Dense => a.dims == [n, l.in_width as u32],
                LayerKind::Conv => {
                    a.dims.len() == 4 && a.dims[0] == n && a.dims[1] == l.in_width as u32
                }
            };
            if !ok {
                return Err(Error::Manifest(format!(
                    "layer {:?} activation tensor {:?} has dims {:?}, expected [{n}, {}{}]",
                    l.name,
                    name,
                    a.dims,
                    l.in_width,
                    if l.kind == LayerKind::Conv { ", I, J" } else { "" }
                )));
            }
        }
    }
    if let Some(name) = &m.input_tensor {
        let x = t.require(name)?;
        expect_dims(x, &[n, m.layers[0].in_width as u32], "input")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_entry() -> TensorEntry {
        TensorEntry::from_f64("W1", vec![2, 2], &[1.0, 0.0, 0.0, 1.0])
    }

    #[test]
    fn single_entry_layout() {
        let mut f = TensorFile::new();
        f.push(identity_entry());
        let bytes = encode(&f).unwrap();
        // magic + name_len + "W1" + ndim + 2 dims + dtype + 4 f64
        assert_eq!(bytes.len(), 4 + 4 + 2 + 4 + 8 + 1 + 32);
        assert_eq!(&bytes[..4], b"CBT1");
        assert_eq!(decode(&bytes).unwrap(), f);
    }

    #[test]
    fn empty_file_is_magic_only() {
        let bytes = encode(&TensorFile::new()).unwrap();
        assert_eq!(bytes, b"CBT1");
        assert!(decode(&bytes).unwrap().entries.is_empty());
    }

    #[test]
    fn length_mismatch_rejected() {
        let mut f = TensorFile::new();
        f.push(TensorEntry::from_f64("W", vec![3, 2], &[1.0; 5]));
        assert!(matches!(encode(&f), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(decode(b"XXXX"), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload_names_entry() {
        let mut f = TensorFile::new();
        f.push(identity_entry());
        let bytes = encode(&f).unwrap();
        match decode(&bytes[..bytes.len() - 3]) {
            Err(Error::Truncated(what)) => assert!(what.contains("W1"), "{what}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_names_rejected_on_read() {
        let mut f = TensorFile::new();
        f.push(identity_entry());
        let mut bytes = encode(&f).unwrap();
        let tail = bytes[4..].to_vec();
        bytes.extend_from_slice(&tail);
        assert!(matches!(decode(&bytes), Err(Error::Validation(_))));
    }

    #[test]
    fn f32_widening_is_exact() {
        let vals = [0.1f32, -3.5, 1e-30, f32::MAX];
        let e = TensorEntry::from_f32("a", vec![4], &vals);
        let wide = e.to_f64_vec();
        for (w, v) in wide.iter().zip(vals) {
            assert_eq!(*w as f32, v);
            assert_eq!(*w, v as f64);
        }
    }

    fn dense_manifest(w2_in: usize) -> Manifest {
        Manifest {
            layers: vec![
                LayerSpec {
                    name: "fc1".into(),
                    kind: LayerKind::Dense,
                    weight_tensor: "W1".into(),
                    in_width: 3,
                    out_width: 4,
                    filter_size: None,
                },
                LayerSpec {
                    name: "fc2".into(),
                    kind: LayerKind::Dense,
                    weight_tensor: "W2".into(),
                    in_width: w2_in,
                    out_width: 1,
                    filter_size: None,
                },
            ],
            activation_tensors: BTreeMap::new(),
            clip_level: 1.0,
            sample_count: 5,
            tensor_file: "t.cbt".into(),
            input_tensor: Some("X".into()),
        }
    }

    fn dense_tensors() -> TensorFile {
        let mut t = TensorFile::new();
        t.push(TensorEntry::from_f64("W1", vec![4, 3], &[0.5; 12]));
        t.push(TensorEntry::from_f64("W2", vec![1, 4], &[0.5; 4]));
        t.push(TensorEntry::from_f64("X", vec![5, 3], &[1.0; 15]));
        t
    }

    #[test]
    fn two_layer_manifest_ok() {
        validate_manifest(&dense_manifest(4), &dense_tensors()).unwrap();
    }

    #[test]
    fn broken_chain() {
        let err = validate_manifest(&dense_manifest(5), &dense_tensors()).unwrap_err();
        assert!(err.to_string().contains("width chain"), "{err}");
    }

    #[test]
    fn conv_layer_with_matrix_weight() {
        let m = Manifest {
            layers: vec![LayerSpec {
                name: "c0".into(),
                kind: LayerKind::Conv,
                weight_tensor: "K".into(),
                in_width: 2,
                out_width: 3,
                filter_size: Some(3),
            }],
            activation_tensors: BTreeMap::new(),
            clip_level: 1.0,
            sample_count: 1,
            tensor_file: "t.cbt".into(),
            input_tensor: None,
        };
        let mut t = TensorFile::new();
        t.push(TensorEntry::from_f64("K", vec![3, 2], &[0.0; 6]));
        let err = validate_manifest(&m, &t).unwrap_err();
        assert!(err.to_string().contains("dims"), "{err}");
    }

    #[test]
    fn clip_level_below_one_rejected() {
        let mut m = dense_manifest(4);
        m.clip_level = 0.5;
        assert!(m.check().is_err());
    }
}
