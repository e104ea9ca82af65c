//! Binary weight serialization: named f64 tensors, little-endian.
//!
//! Layout: magic `FCWT`, version u32, tensor count u32, then per tensor a
//! u16 name length, the UTF-8 name, a u64 element count and the raw f64
//! values. Deterministic byte-for-byte for a given set of tensors.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FCWT";
const VERSION: u32 = 1;

pub fn save_tensors(path: &Path, tensors: &[(&str, &[f64])]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, data) in tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        w.write_all(&(data.len() as u64).to_le_bytes()).map_err(io_err)?;
        for v in *data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Vec<f64>)>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::WeightLoad(format!("{}: {e}", path.display())))?;
    let mut r = std::io::BufReader::new(file);
    let bad = |reason: &str| Error::WeightLoad(format!("{}: {reason}", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
    if &magic != MAGIC {
        return Err(bad("not a weight file"));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    if u32::from_le_bytes(u32buf) != VERSION {
        return Err(bad("unsupported version"));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated header"))?;
    let count = u32::from_le_bytes(u32buf) as usize;

    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf).map_err(|_| bad("truncated tensor name"))?;
        let name_len = u16::from_le_bytes(u16buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(|_| bad("truncated tensor name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| bad("tensor name is not UTF-8"))?;
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf).map_err(|_| bad("truncated tensor length"))?;
        let len = u64::from_le_bytes(u64buf) as usize;
        let mut data = vec![0.0f64; len];
        let mut fbuf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut fbuf).map_err(|_| bad("truncated tensor data"))?;
            *v = f64::from_le_bytes(fbuf);
        }
        tensors.push((name, data));
    }
    Ok(tensors)
}
