//! CKPT tensor archives.
//!
//! Layout: `CKPT`, u32 LE count, then per tensor a u16 LE name length, the
//! UTF-8 name, a u8 rank, rank × u32 LE dims and f32 LE row-major values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamStore;
use crate::tensor::{Element, Tensor};

pub const MAGIC: [u8; 4] = *b"CKPT";

pub fn encode<T: Element>(tensors: &[(String, Tensor<T>)]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize || t.ndim() > u8::MAX as usize {
            return Err(Error::Checkpoint(format!("{name}: name or rank too large")));
        }
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(bytes);
        out.push(t.ndim() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    path: &'a Path,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Truncated {
                path: self.path.display().to_string(),
                needed: self.pos + n,
                available: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode<T: Element>(path: &Path, buf: &[u8]) -> Result<Vec<(String, Tensor<T>)>> {
    let mut r = Reader { path, buf, pos: 0 };
    let magic = r.take(4).map_err(|_| Error::BadMagic {
        path: path.display().to_string(),
        expected: MAGIC,
        found: buf.to_vec(),
    })?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: MAGIC,
            found: magic.to_vec(),
        });
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format {
                path: path.display().to_string(),
                message: "tensor name is not UTF-8".into(),
            })?
            .to_string();
        let ndim = r.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format {
            path: path.display().to_string(),
            message: format!("{name}: dims overflow"),
        })?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| T::from_f64(f32::from_le_bytes(c.try_into().unwrap()) as f64))
            .collect();
        let t = Tensor::new(&dims, data).map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: format!("{name}: {e}"),
        })?;
        out.push((name, t));
    }
    if r.pos != buf.len() {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("{} trailing bytes", buf.len() - r.pos),
        });
    }
    Ok(out)
}

pub fn write<T: Element>(path: &Path, tensors: &[(String, Tensor<T>)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(tensors)?).map_err(|e| Error::io(path, e))
}

pub fn read<T: Element>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(path, &buf)
}

pub fn store_tensors<T: Element>(store: &ParamStore<T>) -> Vec<(String, Tensor<T>)> {
    store
        .entries()
        .iter()
        .map(|e| (e.name.clone(), (*e.value).clone()))
        .collect()
}

pub fn save_store<T: Element>(path: &Path, store: &ParamStore<T>) -> Result<()> {
    write(path, &store_tensors(store))
}

/// Loads every entry of `store` from `tensors`. With `strict`, all entries
/// must be present; otherwise missing names are left as initialized. Returns
/// the number of entries loaded.
pub fn load_into<T: Element>(store: &mut ParamStore<T>, tensors: &[(String, Tensor<T>)], strict: bool) -> Result<usize> {
    let mut loaded = 0;
    for i in 0..store.len() {
        let id = crate::nn::ParamId(i);
        let name = store.name(id).to_string();
        match tensors.iter().find(|(n, _)| *n == name) {
            Some((_, t)) => {
                store.set(id, t.clone())?;
                loaded += 1;
            }
            None if strict => return Err(Error::Checkpoint(format!("missing tensor {name}"))),
            None => {}
        }
    }
    Ok(loaded)
}

/// Store holding `tensors` as named entries, e.g. to transfer weights with
/// `ParamStore::load_from`.
pub fn to_store<T: Element>(tensors: Vec<(String, Tensor<T>)>) -> ParamStore<T> {
    let mut store = ParamStore::new();
    for (name, t) in tensors {
        store.add(name, t, true);
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<(String, Tensor<f32>)> {
        vec![
            ("a.w".into(), Tensor::new(&[2, 3], vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, -0.0]).unwrap()),
            ("b".into(), Tensor::scalar(7.0)),
        ]
    }

    #[test]
    fn round_trip_is_bitwise() {
        let bytes = encode(&sample()).unwrap();
        let back: Vec<(String, Tensor<f32>)> = decode(Path::new("x"), &bytes).unwrap();
        assert_eq!(back.len(), 2);
        for ((n0, t0), (n1, t1)) in sample().iter().zip(&back) {
            assert_eq!(n0, n1);
            assert_eq!(t0.shape(), t1.shape());
            let b0: Vec<u32> = t0.data().iter().map(|v| v.to_bits()).collect();
            let b1: Vec<u32> = t1.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(b0, b1);
        }
    }

    #[test]
    fn size_follows_layout() {
        let bytes = encode(&sample()).unwrap();
        // header 8; "a.w": 2+3+1+8+24; "b": 2+1+1+4+4
        assert_eq!(bytes.len(), 8 + 38 + 12);
    }

    #[test]
    fn magic_and_truncation_errors() {
        let mut bytes = encode(&sample()).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode::<f32>(Path::new("x"), cut), Err(Error::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode::<f32>(Path::new("x"), &bytes), Err(Error::BadMagic { .. })));
        assert!(matches!(decode::<f32>(Path::new("x"), b"CK"), Err(Error::BadMagic { .. })));
    }
}
