//! Versioned binary container for checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    b"CCKP"
//! version  u32 (currently 1)
//! count    u32 number of entries, sorted by name
//! entry*   name_len u32, name utf-8, kind u8, payload
//!   kind 0 (f64 array): ndim u32, dims u64 * ndim, values f64 * prod(dims)
//!   kind 1 (text):      len u64, utf-8 bytes
//!   kind 2 (u64 array): len u64, values u64 * len
//! ```
//!
//! Floats are written with `to_le_bytes`, so a save/load cycle is bit exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::tensor::Mat;

pub const MAGIC: &[u8; 4] = b"CCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    F64 { shape: Vec<usize>, data: Vec<f64> },
    Text(String),
    U64(Vec<u64>),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    entries: BTreeMap<String, Entry>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn put_mat(&mut self, name: &str, m: &Mat) {
        self.entries.insert(
            name.to_string(),
            Entry::F64 {
                shape: vec![m.rows, m.cols],
                data: m.data.clone(),
            },
        );
    }

    pub fn put_f64s(&mut self, name: &str, v: Vec<f64>) {
        self.entries.insert(
            name.to_string(),
            Entry::F64 {
                shape: vec![v.len()],
                data: v,
            },
        );
    }

    pub fn put_text(&mut self, name: &str, s: impl Into<String>) {
        self.entries.insert(name.to_string(), Entry::Text(s.into()));
    }

    pub fn put_u64s(&mut self, name: &str, v: Vec<u64>) {
        self.entries.insert(name.to_string(), Entry::U64(v));
    }

    fn get(&self, name: &str) -> Result<&Entry> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing entry {name}")))
    }

    pub fn mat(&self, name: &str) -> Result<Mat> {
        match self.get(name)? {
            Entry::F64 { shape, data } if shape.len() == 2 => {
                Mat::from_vec(shape[0], shape[1], data.clone())
            }
            _ => Err(Error::Checkpoint(format!("{name} is not a matrix"))),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<Vec<f64>> {
        match self.get(name)? {
            Entry::F64 { data, .. } => Ok(data.clone()),
            _ => Err(Error::Checkpoint(format!("{name} is not an f64 array"))),
        }
    }

    pub fn text(&self, name: &str) -> Result<&str> {
        match self.get(name)? {
            Entry::Text(s) => Ok(s),
            _ => Err(Error::Checkpoint(format!("{name} is not text"))),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.get(name)? {
            Entry::U64(v) => Ok(v),
            _ => Err(Error::Checkpoint(format!("{name} is not a u64 array"))),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, entry) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            match entry {
                Entry::F64 { shape, data } => {
                    w.write_all(&[0])?;
                    w.write_all(&(shape.len() as u32).to_le_bytes())?;
                    for &d in shape {
                        w.write_all(&(d as u64).to_le_bytes())?;
                    }
                    for x in data {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                Entry::Text(s) => {
                    w.write_all(&[1])?;
                    w.write_all(&(s.len() as u64).to_le_bytes())?;
                    w.write_all(s.as_bytes())?;
                }
                Entry::U64(v) => {
                    w.write_all(&[2])?;
                    w.write_all(&(v.len() as u64).to_le_bytes())?;
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(r)?;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::Checkpoint("entry name is not utf-8".into()))?;
            let mut kind = [0u8; 1];
            r.read_exact(&mut kind)?;
            let entry = match kind[0] {
                0 => {
                    let ndim = read_u32(r)? as usize;
                    let shape = (0..ndim)
                        .map(|_| read_u64(r).map(|d| d as usize))
                        .collect::<Result<Vec<_>>>()?;
                    let n: usize = shape.iter().product();
                    let data = (0..n)
                        .map(|_| read_u64(r).map(f64::from_bits))
                        .collect::<Result<Vec<_>>>()?;
                    Entry::F64 { shape, data }
                }
                1 => {
                    let len = read_u64(r)? as usize;
                    let mut buf = vec![0u8; len];
                    r.read_exact(&mut buf)?;
                    Entry::Text(
                        String::from_utf8(buf)
                            .map_err(|_| Error::Checkpoint(format!("{name} is not utf-8")))?,
                    )
                }
                2 => {
                    let len = read_u64(r)? as usize;
                    Entry::U64((0..len).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?)
                }
                k => return Err(Error::Checkpoint(format!("unknown entry kind {k}"))),
            };
            entries.insert(name, entry);
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::adam::{AdamConfig, AdamState};
    use crate::nn::mlp::{Activation, Gradients, MlpParams};
    use crate::rng::RngStream;

    #[test]
    fn network_and_adam_round_trip_bit_exact() {
        let mut rng = RngStream::new(9);
        let mut p = MlpParams::init(&[5, 7, 3], Activation::Relu, &mut rng).unwrap();
        let mut adam = AdamState::new(&p, AdamConfig::default());
        let mut g = Gradients::zeros_like(&p);
        g.weights[0].data[2] = 1.0 / 3.0;
        adam.update(&mut p, &g).unwrap();

        let mut a = Archive::new();
        p.store(&mut a, "policy");
        adam.store(&mut a, "policy.adam");
        a.put_text("note", "hello");
        let mut bytes = Vec::new();
        a.write_to(&mut bytes).unwrap();
        let b = Archive::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(a, b);

        let p2 = MlpParams::load(&b, "policy").unwrap();
        let adam2 = AdamState::load(&b, "policy.adam", &p2).unwrap();
        for (x, y) in p.weights[0].data.iter().zip(&p2.weights[0].data) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(adam, adam2);
        assert_eq!(b.text("note").unwrap(), "hello");
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(Archive::read_from(&mut &b"XXXX\x01\0\0\0\0\0\0\0"[..]).is_err());
        assert!(Archive::read_from(&mut &b"CCKP\x02\0\0\0\0\0\0\0"[..]).is_err());
        let ok = Archive::read_from(&mut &b"CCKP\x01\0\0\0\0\0\0\0"[..]).unwrap();
        assert!(ok.is_empty());
    }
}
