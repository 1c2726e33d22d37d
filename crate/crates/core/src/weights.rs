//! Named parameter storage and the DCFW container.
//!
//! DCFW layout: `b"DCFW"`, `u32` LE entry count, then per entry a `u32` LE
//! name length, the UTF-8 name, and an embedded NTF tensor.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{parse_ntf, write_ntf};
use crate::tensor::Tensor;

pub const DCFW_MAGIC: &[u8; 4] = b"DCFW";

/// Ordered `(name, tensor)` pairs with unique names.
#[derive(Clone, Debug, Default)]
pub struct WeightStore {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_key_value(&self, name: &str) -> Option<(&str, &Tensor)> {
        self.index.get(name).map(|&i| {
            let (n, t) = &self.entries[i];
            (n.as_str(), t)
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    /// Returns a copy with `name` removed; used to build incomplete stores.
    pub fn without(&self, name: &str) -> WeightStore {
        let mut out = WeightStore::new();
        for (n, t) in self.iter().filter(|(n, _)| *n != name) {
            out.insert(n, t.clone()).expect("names are already unique");
        }
        out
    }

    /// Total number of scalars across all entries.
    pub fn scalar_count(&self) -> u64 {
        self.entries.iter().map(|(_, t)| t.shape().numel() as u64).sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = DCFW_MAGIC.to_vec();
        buf.extend_from_slice(&len_u32(self.entries.len())?.to_le_bytes());
        for (name, t) in &self.entries {
            buf.extend_from_slice(&len_u32(name.len())?.to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
            write_ntf(&mut buf, t)?;
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: String| Error::format("DCFW", msg);
        if bytes.len() < 8 {
            return Err(fail("truncated header".into()));
        }
        if &bytes[..4] != DCFW_MAGIC {
            return Err(fail("bad magic".into()));
        }
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let mut pos = 8;
        let mut store = WeightStore::new();
        for i in 0..count {
            let len_bytes = bytes
                .get(pos..pos + 4)
                .ok_or_else(|| fail(format!("truncated at entry {i}")))?;
            let len = u32::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
            pos += 4;
            let name = bytes
                .get(pos..pos + len)
                .ok_or_else(|| fail(format!("truncated name at entry {i}")))?;
            let name = std::str::from_utf8(name).map_err(|_| fail(format!("entry {i} name is not UTF-8")))?;
            pos += len;
            let (tensor, used) = parse_ntf(&bytes[pos..]).map_err(|e| fail(format!("entry `{name}`: {e}")))?;
            pos += used;
            store.insert(name, tensor).map_err(|e| match e {
                Error::DuplicateParameter(n) => fail(format!("duplicate name `{n}`")),
                other => other,
            })?;
        }
        if pos != bytes.len() {
            return Err(fail(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

fn len_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::format("DCFW", format!("length {v} exceeds u32")))
}
