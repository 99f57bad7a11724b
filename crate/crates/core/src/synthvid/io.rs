//! On-disk layout: `<dir>/<split>/<video_id>/<frame_index>.pgm` frames,
//! `<dir>/<split>/<video_id>/labels.csv`, and AMAP masks under
//! `<dir>/masks/<split>/<video_id>/<frame_index>.amap` for the mixed splits.

use std::fs;
use std::path::Path;

use super::{Clip, Dataset, GroundTruth};
use crate::error::{Error, Result};
use crate::metrics::{read_labels, write_labels};
use crate::teachers::{load_precomputed, store_precomputed};
use crate::tensor::Tensor;

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let mut buf = format!("P5\n{width} {height}\n255\n").into_bytes();
    buf.extend_from_slice(pixels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Reads a binary 8-bit PGM, returning (width, height, pixels).
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fmt = |m: &str| Error::Format {
        path: path.display().to_string(),
        message: m.to_string(),
    };
    if buf.len() < 2 || &buf[..2] != b"P5" {
        return Err(Error::BadMagic {
            path: path.display().to_string(),
            expected: *b"P5\n ",
            found: buf.iter().take(2).copied().collect(),
        });
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for f in &mut fields {
        loop {
            match buf.get(pos) {
                Some(b'#') => {
                    while buf.get(pos).is_some_and(|&c| c != b'\n') {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while buf.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *f = std::str::from_utf8(&buf[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| fmt("bad header field"))?;
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval != 255 {
        return Err(fmt("only 8-bit PGM is supported"));
    }
    let need = w * h;
    if buf.len() < pos + need {
        return Err(Error::Truncated {
            path: path.display().to_string(),
            needed: pos + need,
            available: buf.len(),
        });
    }
    Ok((w, h, buf[pos..pos + need].to_vec()))
}

pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    for split in super::SPLITS {
        let clips = ds.split(split).unwrap_or_default();
        for clip in clips {
            let vdir = dir.join(split).join(&clip.video_id);
            fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
            for (i, frame) in clip.frames.iter().enumerate() {
                write_pgm(&vdir.join(format!("{i}.pgm")), clip.width, clip.height, frame)?;
            }
            write_labels(&vdir.join("labels.csv"), clip.labels())?;
            if split != "train" {
                let mdir = dir.join("masks").join(split);
                for i in 0..clip.len() {
                    store_precomputed(&mdir, &clip.video_id, i, &clip.mask_tensor(i))?;
                }
            }
        }
    }
    Ok(())
}

fn load_clip(dir: &Path, split: &str, video_id: &str) -> Result<Clip> {
    let vdir = dir.join(split).join(video_id);
    let labels = read_labels(&vdir.join("labels.csv"))?;
    let mut frames = Vec::with_capacity(labels.len());
    let (mut width, mut height) = (0, 0);
    for i in 0..labels.len() {
        let (w, h, px) = read_pgm(&vdir.join(format!("{i}.pgm")))?;
        if i > 0 && (w, h) != (width, height) {
            return Err(Error::Format {
                path: vdir.display().to_string(),
                message: "frames differ in size".into(),
            });
        }
        (width, height) = (w, h);
        frames.push(px);
    }
    let masks = if split == "train" {
        vec![vec![0u8; width * height]; labels.len()]
    } else {
        let mdir = dir.join("masks").join(split);
        (0..labels.len())
            .map(|i| {
                let m: Tensor<f32> = load_precomputed(&mdir, video_id, i)?.full_map;
                Ok(m.data().iter().map(|&v| (v > 0.0) as u8).collect())
            })
            .collect::<Result<Vec<_>>>()?
    };
    let ground_truth = GroundTruth { labels, masks };
    Ok(Clip {
        video_id: video_id.to_string(),
        height,
        width,
        frames,
        ground_truth,
    })
}

fn load_split(dir: &Path, split: &str) -> Result<Vec<Clip>> {
    let sdir = dir.join(split);
    if !sdir.exists() {
        return Ok(Vec::new());
    }
    let mut ids: Vec<String> = fs::read_dir(&sdir)
        .map_err(|e| Error::io(&sdir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    ids.sort();
    ids.iter().map(|id| load_clip(dir, split, id)).collect()
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    if !dir.exists() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    Ok(Dataset {
        train: load_split(dir, "train")?,
        distill: load_split(dir, "distill")?,
        test: load_split(dir, "test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::*;
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let px: Vec<u8> = (0..12).map(|i| i * 20).collect();
        write_pgm(&p, 4, 3, &px).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), (4, 3, px));
        fs::write(&p, b"P6\n1 1\n255\n\0").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::BadMagic { .. })));
        fs::write(&p, b"P5\n# note\n2 2\n255\n\0").unwrap();
        assert!(matches!(read_pgm(&p), Err(Error::Truncated { .. })));
    }

    #[test]
    fn dataset_round_trip() {
        let cfg = SceneConfig {
            train_clips: 2,
            distill_clips: 1,
            test_clips: 2,
            clip_length: 12,
            ..Default::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
        assert!(dir.path().join("test/test_000/11.pgm").exists());
        assert!(dir.path().join("masks/test/test_000/11.amap").exists());
    }
}
