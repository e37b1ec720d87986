//! Self-describing named-array container.
//!
//! One file holds any number of named, shaped, typed arrays plus a free-form
//! JSON `meta` object. Two encodings share the same logical model:
//!
//! **Binary** (`read`/`write`):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "NARR"
//! 4       4           format version, u32 LE (currently 1)
//! 8       8           header length H, u64 LE
//! 16      H           header: UTF-8 JSON
//!                       {"meta": <any>, "arrays": [{"name","dtype","shape"}...]}
//! 16+H    ...         array payloads, concatenated in header order,
//!                     little-endian scalars, row-major, no padding
//! ```
//!
//! **JSON** (`read_json`/`write_json`): the same header with an inline
//! `"data"` array per entry; used for hand-written test fixtures.
//!
//! [`Container::read_auto`] sniffs the magic and accepts either encoding.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"NARR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
    U32,
    I32,
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 | Dtype::U32 | Dtype::I32 => 4,
            Dtype::F64 => 8,
            Dtype::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U32(Vec<u32>),
    I32(Vec<i32>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> Dtype {
        match self {
            ArrayData::F32(_) => Dtype::F32,
            ArrayData::F64(_) => Dtype::F64,
            ArrayData::U32(_) => Dtype::U32,
            ArrayData::I32(_) => Dtype::I32,
            ArrayData::U8(_) => Dtype::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F32(v) => v.len(),
            ArrayData::F64(v) => v.len(),
            ArrayData::U32(v) => v.len(),
            ArrayData::I32(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub shape: Vec<usize>,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(shape: Vec<usize>, data: ArrayData) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dimension(format!(
                "shape {:?} implies {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(NamedArray { shape, data })
    }

    /// Values widened to f64 regardless of stored float width.
    pub fn as_f64(&self) -> Result<Vec<f64>> {
        match &self.data {
            ArrayData::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            ArrayData::F64(v) => Ok(v.clone()),
            other => Err(Error::parse(format!(
                "expected float array, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn as_u32(&self) -> Result<&[u32]> {
        match &self.data {
            ArrayData::U32(v) => Ok(v),
            other => Err(Error::parse(format!(
                "expected u32 array, found {:?}",
                other.dtype()
            ))),
        }
    }

    pub fn as_i32(&self) -> Result<&[i32]> {
        match &self.data {
            ArrayData::I32(v) => Ok(v),
            other => Err(Error::parse(format!(
                "expected i32 array, found {:?}",
                other.dtype()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Container {
    pub meta: serde_json::Value,
    entries: Vec<(String, NamedArray)>,
}

#[derive(Serialize, Deserialize)]
struct HeaderEntry {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(default)]
    meta: serde_json::Value,
    arrays: Vec<HeaderEntry>,
}

impl Container {
    pub fn new() -> Self {
        Container::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, array: NamedArray) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = array;
        } else {
            self.entries.push((name, array));
        }
    }

    pub fn insert_f32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        self.insert(name, NamedArray::new(shape, ArrayData::F32(data))?);
        Ok(())
    }

    pub fn insert_f64(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        self.insert(name, NamedArray::new(shape, ArrayData::F64(data))?);
        Ok(())
    }

    pub fn insert_u32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<u32>) -> Result<()> {
        self.insert(name, NamedArray::new(shape, ArrayData::U32(data))?);
        Ok(())
    }

    pub fn insert_i32(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<i32>) -> Result<()> {
        self.insert(name, NamedArray::new(shape, ArrayData::I32(data))?);
        Ok(())
    }

    pub fn insert_u8(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<u8>) -> Result<()> {
        self.insert(name, NamedArray::new(shape, ArrayData::U8(data))?);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn require(&self, name: &str) -> Result<&NamedArray> {
        self.get(name)
            .ok_or_else(|| Error::parse(format!("missing array '{name}'")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .entries
                .iter()
                .map(|(name, a)| HeaderEntry {
                    name: name.clone(),
                    dtype: a.data.dtype(),
                    shape: a.shape.clone(),
                    data: None,
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let mut f = fs::File::create(path)?;
        f.write_all(MAGIC)?;
        f.write_all(&VERSION.to_le_bytes())?;
        f.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
        f.write_all(&header_bytes)?;
        for (_, a) in &self.entries {
            match &a.data {
                ArrayData::F32(v) => {
                    for x in v {
                        f.write_all(&x.to_le_bytes())?;
                    }
                }
                ArrayData::F64(v) => {
                    for x in v {
                        f.write_all(&x.to_le_bytes())?;
                    }
                }
                ArrayData::U32(v) => {
                    for x in v {
                        f.write_all(&x.to_le_bytes())?;
                    }
                }
                ArrayData::I32(v) => {
                    for x in v {
                        f.write_all(&x.to_le_bytes())?;
                    }
                }
                ArrayData::U8(v) => f.write_all(v)?,
            }
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_binary(&bytes)
    }

    fn from_binary(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != MAGIC {
            return Err(Error::parse("not a named-array container (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::SchemaVersion {
                found: version,
                expected: VERSION,
            });
        }
        let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() < 16 + header_len {
            return Err(Error::parse("truncated container header"));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;
        let mut off = 16 + header_len;
        let mut out = Container {
            meta: header.meta,
            entries: Vec::with_capacity(header.arrays.len()),
        };
        for e in header.arrays {
            let n: usize = e.shape.iter().product();
            let nbytes = n * e.dtype.size();
            if bytes.len() < off + nbytes {
                return Err(Error::parse(format!("truncated payload for '{}'", e.name)));
            }
            let raw = &bytes[off..off + nbytes];
            off += nbytes;
            let data = match e.dtype {
                Dtype::F32 => ArrayData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                Dtype::F64 => ArrayData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                Dtype::U32 => ArrayData::U32(
                    raw.chunks_exact(4)
                        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                Dtype::I32 => ArrayData::I32(
                    raw.chunks_exact(4)
                        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                ),
                Dtype::U8 => ArrayData::U8(raw.to_vec()),
            };
            out.entries.push((e.name, NamedArray::new(e.shape, data)?));
        }
        Ok(out)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .entries
                .iter()
                .map(|(name, a)| HeaderEntry {
                    name: name.clone(),
                    dtype: a.data.dtype(),
                    shape: a.shape.clone(),
                    data: Some(array_to_json(&a.data)),
                })
                .collect(),
        };
        fs::write(path, serde_json::to_vec_pretty(&header)?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_json(&bytes)
    }

    fn from_json(bytes: &[u8]) -> Result<Self> {
        let header: Header = serde_json::from_slice(bytes)?;
        let mut out = Container {
            meta: header.meta,
            entries: Vec::with_capacity(header.arrays.len()),
        };
        for e in header.arrays {
            let data_json = e
                .data
                .ok_or_else(|| Error::parse(format!("array '{}' has no inline data", e.name)))?;
            let data = array_from_json(e.dtype, &data_json)?;
            out.entries.push((e.name, NamedArray::new(e.shape, data)?));
        }
        Ok(out)
    }

    /// Reads either encoding, dispatching on the binary magic.
    pub fn read_auto(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path.as_ref())?;
        if bytes.len() >= 4 && &bytes[0..4] == MAGIC {
            Self::from_binary(&bytes)
        } else {
            Self::from_json(&bytes)
        }
    }
}

fn array_to_json(data: &ArrayData) -> serde_json::Value {
    match data {
        ArrayData::F32(v) => serde_json::json!(v),
        ArrayData::F64(v) => serde_json::json!(v),
        ArrayData::U32(v) => serde_json::json!(v),
        ArrayData::I32(v) => serde_json::json!(v),
        ArrayData::U8(v) => serde_json::json!(v),
    }
}

fn array_from_json(dtype: Dtype, v: &serde_json::Value) -> Result<ArrayData> {
    macro_rules! parse {
        ($variant:ident, $ty:ty) => {{
            let vals: Vec<$ty> = serde_json::from_value(v.clone())?;
            Ok(ArrayData::$variant(vals))
        }};
    }
    match dtype {
        Dtype::F32 => parse!(F32, f32),
        Dtype::F64 => parse!(F64, f64),
        Dtype::U32 => parse!(U32, u32),
        Dtype::I32 => parse!(I32, i32),
        Dtype::U8 => parse!(U8, u8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Container {
        let mut c = Container::new();
        c.meta = serde_json::json!({"kind": "test", "seed": 7});
        c.insert_f32("a", vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        c.insert_u32("idx", vec![3], vec![0, 2, 1]).unwrap();
        c.insert_i32("parents", vec![2], vec![-1, 0]).unwrap();
        c.insert_f64("d", vec![2], vec![0.25, -1.5]).unwrap();
        c
    }

    #[test]
    fn binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let c = sample();
        c.write(&p).unwrap();
        let back = Container::read(&p).unwrap();
        assert_eq!(back.meta, c.meta);
        for name in c.names() {
            assert_eq!(back.get(name), c.get(name));
        }
    }

    #[test]
    fn json_roundtrip_and_auto() {
        let dir = tempfile::tempdir().unwrap();
        let pj = dir.path().join("t.json");
        let pb = dir.path().join("t.bin");
        let c = sample();
        c.write_json(&pj).unwrap();
        c.write(&pb).unwrap();
        let from_json = Container::read_auto(&pj).unwrap();
        let from_bin = Container::read_auto(&pb).unwrap();
        assert_eq!(from_json.get("a"), from_bin.get("a"));
        assert_eq!(from_json.get("parents"), c.get("parents"));
    }

    #[test]
    fn shape_mismatch_rejected() {
        assert!(NamedArray::new(vec![2, 2], ArrayData::F32(vec![1.0])).is_err());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.bin");
        std::fs::write(&p, b"XXXXjunkjunkjunkjunk").unwrap();
        assert!(Container::read(&p).is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v9.bin");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(MAGIC);
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(b"{}");
        std::fs::write(&p, &bytes).unwrap();
        match Container::read(&p) {
            Err(Error::SchemaVersion { found: 9, .. }) => {}
            other => panic!("expected schema version error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn f64_payload_roundtrips_bitexact(vals in proptest::collection::vec(-1e6f64..1e6, 0..64)) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("prop.bin");
            let mut c = Container::new();
            let n = vals.len();
            c.insert_f64("x", vec![n], vals.clone()).unwrap();
            c.write(&p).unwrap();
            let back = Container::read(&p).unwrap();
            let got = back.require("x").unwrap().as_f64().unwrap();
            prop_assert_eq!(got.len(), n);
            for (a, b) in got.iter().zip(vals.iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
