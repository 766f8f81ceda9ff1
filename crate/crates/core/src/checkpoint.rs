//! Binary container for named tensors plus string metadata.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"BCKT" | u32 version | u32 n_meta | (str key, str value)* | u32 n_tensors | (str name, u64 rows, u64 cols, f64 data*)*
//! ```
//!
//! where `str` is a `u32` byte length followed by UTF-8 bytes.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &[u8; 4] = b"BCKT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(|e| bad(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let mut buf = Vec::new();
        (&mut self.inner).take(n as u64).read_to_end(&mut buf).map_err(|e| bad(e.to_string()))?;
        if buf.len() != n {
            return Err(bad("truncated string"));
        }
        String::from_utf8(buf).map_err(|_| bad("string is not UTF-8"))
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.tensors.push((name.into(), m));
    }

    pub fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| bad(format!("no tensor named `{name}`")))
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing metadata `{key}`")))
    }

    /// Tensors whose names start with `prefix`, in stored order.
    pub fn group(&self, prefix: &str) -> Vec<Matrix> {
        self.tensors.iter().filter(|(n, _)| n.starts_with(prefix)).map(|(_, m)| m.clone()).collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.meta.len() as u32).to_le_bytes())?;
        for (k, v) in &self.meta {
            write_str(&mut w, k)?;
            write_str(&mut w, v)?;
        }
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, m) in &self.tensors {
            write_str(&mut w, name)?;
            w.write_all(&(m.rows() as u64).to_le_bytes())?;
            w.write_all(&(m.cols() as u64).to_le_bytes())?;
            for v in m.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut r = Reader { inner: r };
        if &r.bytes::<4>()? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("checkpoint version {version}, this build reads {CHECKPOINT_VERSION}")));
        }
        let mut cp = Checkpoint::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            cp.meta.insert(k, v);
        }
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let (rows, cols) = (r.u64()? as usize, r.u64()? as usize);
            let len = rows.checked_mul(cols).ok_or_else(|| bad("tensor too large"))?;
            let mut data = Vec::with_capacity(len.min(1 << 24));
            for _ in 0..len {
                data.push(f64::from_le_bytes(r.bytes()?));
            }
            cp.push(name, Matrix::from_vec(rows, cols, data)?);
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(std::io::BufReader::new(f))
    }
}
