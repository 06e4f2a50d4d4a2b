//! Named-tensor container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"GNUMCKPT" u32:version
//! u32:n_meta   { u32:len key-bytes u32:len value-bytes }*
//! u32:n_tensor { u32:len name-bytes u64:rows u64:cols f64*rows*cols }*
//! ```

use std::io::{self, Read, Write};

use indexmap::IndexMap;
use ndarray::Array2;

use super::ParamStore;

const MAGIC: &[u8; 8] = b"GNUMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus string metadata describing how they were produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub metadata: IndexMap<String, String>,
    pub params: ParamStore,
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(ckpt.metadata.len() as u32).to_le_bytes())?;
    for (k, v) in &ckpt.metadata {
        write_str(&mut w, k)?;
        write_str(&mut w, v)?;
    }
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes())?;
    for (name, m) in ckpt.params.iter() {
        write_str(&mut w, name)?;
        w.write_all(&(m.nrows() as u64).to_le_bytes())?;
        w.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for x in m.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> io::Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a checkpoint file (bad magic)"));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(invalid(&format!("unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")));
    }
    let mut metadata = IndexMap::new();
    for _ in 0..read_u32(&mut r)? {
        let k = read_str(&mut r)?;
        let v = read_str(&mut r)?;
        metadata.insert(k, v);
    }
    let mut params = ParamStore::new();
    for _ in 0..read_u32(&mut r)? {
        let name = read_str(&mut r)?;
        let rows = read_u64(&mut r)? as usize;
        let cols = read_u64(&mut r)? as usize;
        let n = rows.checked_mul(cols).filter(|&n| n < (1 << 32)).ok_or_else(|| invalid("tensor too large"))?;
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        let data = buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let m = Array2::from_shape_vec((rows, cols), data).map_err(|e| invalid(&e.to_string()))?;
        params.insert(name, m);
    }
    Ok(Checkpoint { metadata, params })
}

fn invalid(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.to_string())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> io::Result<String> {
    let len = read_u32(r)? as usize;
    if len > 1 << 20 {
        return Err(invalid("string field too long"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| invalid("string field is not utf-8"))
}
