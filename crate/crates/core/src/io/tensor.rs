//! Minimal self-describing tensor container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "WWTC" | u32 version (1) | u32 count
//! per tensor: u32 name_len | name (UTF-8) | u8 dtype | u32 rank | u64 dims[rank] | payload
//! ```
//!
//! dtype is 0 = f64, 1 = f32, 2 = u8; payloads are row-major.

use std::path::Path;

use ndarray::{Array2, Array3, ArrayD, IxDyn};

use super::{read_bytes, write_bytes, IoError, Location};
use crate::conditioning::EmbeddingTable;
use crate::geometry::Vec3;
use crate::spc::AnchorPointMap;

const MAGIC: &[u8; 4] = b"WWTC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    F64(ArrayD<f64>),
    F32(ArrayD<f32>),
    U8(ArrayD<u8>),
}

impl Tensor {
    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::F64(a) => a.shape(),
            Tensor::F32(a) => a.shape(),
            Tensor::U8(a) => a.shape(),
        }
    }

    fn dtype(&self) -> u8 {
        match self {
            Tensor::F64(_) => 0,
            Tensor::F32(_) => 1,
            Tensor::U8(_) => 2,
        }
    }
}

/// Named tensors in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TensorFile {
    pub entries: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dtype());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for d in t.shape() {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            match t {
                Tensor::F64(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                Tensor::F32(a) => a.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                Tensor::U8(a) => out.extend(a.iter()),
            }
        }
        out
    }

    pub fn from_bytes(path: &Path, bytes: &[u8]) -> Result<Self, IoError> {
        let mut r = Reader { path, bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(IoError::parse(path, Location::Offset(0), "not a tensor container (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(IoError::parse(path, Location::Offset(4), format!("unsupported container version {version}")));
        }
        let count = r.u32()?;
        let mut file = TensorFile::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| IoError::parse(path, Location::Offset(at as u64), "tensor name is not UTF-8"))?
                .to_string();
            let dtype_at = r.pos;
            let dtype = r.take(1)?[0];
            let rank = r.u32()? as usize;
            if rank > 16 {
                return Err(IoError::parse(path, Location::Offset(dtype_at as u64 + 1), format!("rank {rank} too large")));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u64()? as usize);
            }
            let n = dims.iter().try_fold(1usize, |a, d| a.checked_mul(*d));
            let n = n.ok_or_else(|| IoError::parse(path, Location::Offset(r.pos as u64), "tensor size overflows"))?;
            let shape = IxDyn(&dims);
            let t = match dtype {
                0 => {
                    let raw = r.take(n.saturating_mul(8))?;
                    let v = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::F64(ArrayD::from_shape_vec(shape, v).expect("size checked"))
                }
                1 => {
                    let raw = r.take(n.saturating_mul(4))?;
                    let v = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                    Tensor::F32(ArrayD::from_shape_vec(shape, v).expect("size checked"))
                }
                2 => Tensor::U8(ArrayD::from_shape_vec(shape, r.take(n)?.to_vec()).expect("size checked")),
                other => {
                    return Err(IoError::parse(path, Location::Offset(dtype_at as u64), format!("unknown dtype {other}")))
                }
            };
            if file.get(&name).is_some() {
                return Err(IoError::parse(path, Location::Offset(at as u64), format!("duplicate tensor '{name}'")));
            }
            file.push(name, t);
        }
        if r.pos != bytes.len() {
            return Err(IoError::parse(path, Location::Offset(r.pos as u64), "trailing bytes after last tensor"));
        }
        Ok(file)
    }

    fn require(&self, path: &Path, name: &str) -> Result<&Tensor, IoError> {
        self.get(name).ok_or_else(|| IoError::invalid(path, format!("missing tensor '{name}'")))
    }

    pub fn f64_2d(&self, path: &Path, name: &str) -> Result<Array2<f64>, IoError> {
        match self.require(path, name)? {
            Tensor::F64(a) => a.clone().into_dimensionality().map_err(|_| {
                IoError::invalid(path, format!("tensor '{name}' has shape {:?}, expected rank 2", a.shape()))
            }),
            _ => Err(IoError::invalid(path, format!("tensor '{name}' must be f64"))),
        }
    }

    pub fn f64_3d(&self, path: &Path, name: &str) -> Result<Array3<f64>, IoError> {
        match self.require(path, name)? {
            Tensor::F64(a) => a.clone().into_dimensionality().map_err(|_| {
                IoError::invalid(path, format!("tensor '{name}' has shape {:?}, expected rank 3", a.shape()))
            }),
            _ => Err(IoError::invalid(path, format!("tensor '{name}' must be f64"))),
        }
    }
}

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            IoError::parse(self.path, Location::Offset(self.pos as u64), format!("truncated: need {n} more bytes"))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_tensors(path: &Path, file: &TensorFile) -> Result<(), IoError> {
    write_bytes(path, &file.to_bytes())
}

pub fn load_tensors(path: &Path) -> Result<TensorFile, IoError> {
    TensorFile::from_bytes(path, &read_bytes(path)?)
}

const TABLE_NAMES: [&str; 5] = ["temporal", "view", "text_pos", "proj_clip", "proj_text"];

pub fn save_embedding_table(path: &Path, t: &EmbeddingTable) -> Result<(), IoError> {
    let mut f = TensorFile::new();
    for (name, a) in TABLE_NAMES.iter().zip([&t.temporal, &t.view, &t.text_pos, &t.proj_clip, &t.proj_text]) {
        f.push(*name, Tensor::F64(a.clone().into_dyn()));
    }
    save_tensors(path, &f)
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable, IoError> {
    let f = load_tensors(path)?;
    let t = EmbeddingTable {
        temporal: f.f64_2d(path, "temporal")?,
        view: f.f64_2d(path, "view")?,
        text_pos: f.f64_2d(path, "text_pos")?,
        proj_clip: f.f64_2d(path, "proj_clip")?,
        proj_text: f.f64_2d(path, "proj_text")?,
    };
    t.validate().map_err(|e| IoError::invalid(path, e.to_string()))?;
    Ok(t)
}

/// `points`: `H×W×3` f64; `valid`: `H×W` u8 (0 or 1).
pub fn save_point_map(path: &Path, map: &AnchorPointMap) -> Result<(), IoError> {
    let (w, h) = (map.width(), map.height());
    let pts = Array3::from_shape_fn((h, w, 3), |(y, x, c)| map.points()[y * w + x][c]);
    let valid = Array2::from_shape_fn((h, w), |(y, x)| u8::from(map.valid()[y * w + x]));
    let mut f = TensorFile::new();
    f.push("points", Tensor::F64(pts.into_dyn()));
    f.push("valid", Tensor::U8(valid.into_dyn()));
    save_tensors(path, &f)
}

pub fn load_point_map(path: &Path) -> Result<AnchorPointMap, IoError> {
    let f = load_tensors(path)?;
    let pts = f.f64_3d(path, "points")?;
    let (h, w, c) = pts.dim();
    if c != 3 {
        return Err(IoError::invalid(path, format!("points must be HxWx3, got {:?}", pts.dim())));
    }
    let valid = match f.require(path, "valid")? {
        Tensor::U8(a) if a.shape() == [h, w] => a.iter().map(|v| *v != 0).collect::<Vec<_>>(),
        _ => return Err(IoError::invalid(path, "valid must be a u8 tensor matching points")),
    };
    let points = (0..h * w).map(|i| Vec3::new(pts[(i / w, i % w, 0)], pts[(i / w, i % w, 1)], pts[(i / w, i % w, 2)])).collect();
    AnchorPointMap::from_parts(w, h, points, valid)
        .ok_or_else(|| IoError::invalid(path, "invalid entries must be zero and valid entries finite"))
}
