//! Flat parameter archive.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"RSAWCKP1"
//! u32     manifest length, then that many bytes of `key=value\n` text
//! u32     tensor count
//! repeat: u32 name length, name bytes, u32 ndim, ndim x u64 extents,
//!         product(extents) x f64 values
//! ```

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RSAWCKP1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Archive {
    /// Ordered `key=value` manifest entries.
    pub manifest: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
}

impl Archive {
    pub fn manifest_value(&self, key: &str) -> Option<&str> {
        self.manifest.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        let manifest: String = self.manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        w.write_all(&(manifest.len() as u32).to_le_bytes())?;
        w.write_all(manifest.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.ndim() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let bad = |what: &str| Error::IncompatibleCheckpoint(what.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint archive"));
        }
        let manifest_len = read_u32(&mut r)? as usize;
        let mut text = vec![0u8; manifest_len];
        r.read_exact(&mut text).map_err(|_| bad("truncated manifest"))?;
        let text = String::from_utf8(text).map_err(|_| bad("manifest is not UTF-8"))?;
        let manifest = text
            .lines()
            .map(|line| {
                line.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| bad("malformed manifest line"))
            })
            .collect::<Result<Vec<_>>>()?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| bad("truncated tensor name"))?;
            let name = String::from_utf8(name).map_err(|_| bad("tensor name is not UTF-8"))?;
            let ndim = read_u32(&mut r)? as usize;
            let shape = (0..ndim).map(|_| read_u64(&mut r).map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf).map_err(|_| bad("truncated tensor data"))?;
            let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, Tensor::from_vec(shape, data)?));
        }
        Ok(Archive { manifest, tensors })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::IncompatibleCheckpoint("truncated archive".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::IncompatibleCheckpoint("truncated archive".into()))?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trips_bitwise(values in proptest::collection::vec(any::<f64>(), 0..40), rows in 1usize..4) {
            let n = values.len() / rows * rows;
            let t = Tensor::from_vec(vec![rows, n / rows], values[..n].to_vec()).unwrap();
            let archive = Archive {
                manifest: vec![("config_hash".into(), "abc".into()), ("variant".into(), "full".into())],
                tensors: vec![("w".into(), t.clone()), ("b".into(), Tensor::scalar(-0.0))],
            };
            let bytes = archive.to_bytes();
            let back = Archive::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
            let got: Vec<u64> = back.tensor("w").unwrap().data().iter().map(|v| v.to_bits()).collect();
            let want: Vec<u64> = t.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(Archive::from_bytes(b"nope"), Err(Error::IncompatibleCheckpoint(_))));
        let mut bytes = Archive { manifest: vec![], tensors: vec![("x".into(), Tensor::zeros(&[3]))] }.to_bytes();
        bytes.truncate(bytes.len() - 4);
        assert!(Archive::from_bytes(&bytes).is_err());
    }
}
