//! AMAP files: `AMP1`, u32 LE height, u32 LE width, f32 LE row-major values,
//! stored at `<dir>/<video_id>/<frame_index>.amap`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Provenance, TeacherOutput};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"AMP1";

pub fn amap_path(dir: &Path, video_id: &str, frame_index: usize) -> PathBuf {
    dir.join(video_id).join(format!("{frame_index}.amap"))
}

pub fn encode_amap(map: &Tensor<f32>) -> Result<Vec<u8>> {
    let &[h, w] = map.shape() else {
        return Err(Error::shape("amap", format!("expected a 2-D map, got {:?}", map.shape())));
    };
    let mut out = Vec::with_capacity(12 + 4 * h * w);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    for v in map.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_amap(path: &Path, buf: &[u8]) -> Result<Tensor<f32>> {
    let p = || path.display().to_string();
    if buf.len() < 4 || buf[..4] != MAGIC {
        return Err(Error::BadMagic {
            path: p(),
            expected: MAGIC,
            found: buf.iter().take(4).copied().collect(),
        });
    }
    if buf.len() < 12 {
        return Err(Error::Truncated {
            path: p(),
            needed: 12,
            available: buf.len(),
        });
    }
    let h = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let needed = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(12))
        .ok_or_else(|| Error::Format {
            path: p(),
            message: format!("dimensions {h}x{w} overflow"),
        })?;
    if buf.len() < needed {
        return Err(Error::Truncated {
            path: p(),
            needed,
            available: buf.len(),
        });
    }
    if buf.len() > needed {
        return Err(Error::Format {
            path: p(),
            message: format!("{} trailing bytes", buf.len() - needed),
        });
    }
    let data = buf[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Tensor::new(&[h, w], data).map_err(|e| Error::Format {
        path: p(),
        message: e.to_string(),
    })
}

pub fn store_precomputed(dir: &Path, video_id: &str, frame_index: usize, map: &Tensor<f32>) -> Result<()> {
    let path = amap_path(dir, video_id, frame_index);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, encode_amap(map)?).map_err(|e| Error::io(&path, e))
}

pub fn load_precomputed(dir: &Path, video_id: &str, frame_index: usize) -> Result<TeacherOutput> {
    let path = amap_path(dir, video_id, frame_index);
    let buf = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    Ok(TeacherOutput {
        full_map: decode_amap(&path, &buf)?,
        provenance: Provenance::Precomputed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let map = Tensor::new(&[4, 4], (0..16).map(|i| i as f32 * 0.37 - 2.0).collect()).unwrap();
        store_precomputed(dir.path(), "v", 3, &map).unwrap();
        let path = amap_path(dir.path(), "v", 3);
        assert_eq!(fs::metadata(&path).unwrap().len(), 76);
        let back = load_precomputed(dir.path(), "v", 3).unwrap();
        assert_eq!(back.full_map, map);
        assert_eq!(back.provenance, Provenance::Precomputed);
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_precomputed(dir.path(), "v", 0), Err(Error::MissingFile(_))));
        let good = encode_amap(&Tensor::zeros(&[2, 2])).unwrap();
        let p = Path::new("m");
        let mut bad = good.clone();
        bad[3] = b'0';
        assert!(matches!(decode_amap(p, &bad), Err(Error::BadMagic { .. })));
        assert!(matches!(decode_amap(p, &good[..20]), Err(Error::Truncated { .. })));
        assert!(matches!(decode_amap(p, &good[..6]), Err(Error::Truncated { .. })));
    }
}
