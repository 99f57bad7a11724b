use std::path::Path;

use swiftvad::checkpoint;
use swiftvad::model::{ModelConfig, StudentModel};
use swiftvad::synthvid::{generate_dataset, load_dataset, write_dataset, SceneConfig};
use swiftvad::teachers::{decode_amap, encode_amap, load_precomputed, store_precomputed};
use swiftvad::tensor::Tensor;
use swiftvad::Error;

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let model = StudentModel::<f32>::new(&ModelConfig::default(), 9).unwrap();
    let path = tmp.path().join("nested/student.ckpt");
    let tensors: Vec<_> = model.store.entries().iter().map(|e| (e.name.clone(), (*e.value).clone())).collect();
    checkpoint::write(&path, &tensors).unwrap();
    let back = checkpoint::read::<f32>(&path).unwrap();
    assert_eq!(back.len(), tensors.len());
    for ((na, a), (nb, b)) in back.iter().zip(&tensors) {
        assert_eq!(na, nb);
        assert_eq!(a.shape(), b.shape());
        assert_eq!(bits(a), bits(b));
    }
    let mut reloaded = StudentModel::<f32>::new(&ModelConfig::default(), 1).unwrap();
    checkpoint::load_into(&mut reloaded.store, &back, true).unwrap();
    assert_eq!(reloaded.store.fingerprint(), model.store.fingerprint());
}

#[test]
fn checkpoint_header_layout() {
    let t = Tensor::new(&[2], vec![1.0f32, -0.0]).unwrap();
    let bytes = checkpoint::encode(&[("ab".to_string(), t)]).unwrap();
    let mut expected = b"CKPT".to_vec();
    expected.extend_from_slice(&1u32.to_le_bytes());
    expected.extend_from_slice(&2u16.to_le_bytes());
    expected.extend_from_slice(b"ab");
    expected.push(1);
    expected.extend_from_slice(&2u32.to_le_bytes());
    expected.extend_from_slice(&1.0f32.to_le_bytes());
    expected.extend_from_slice(&(-0.0f32).to_le_bytes());
    assert_eq!(bytes, expected);
}

#[test]
fn checkpoint_errors_are_structured() {
    let p = Path::new("x.ckpt");
    let t = Tensor::new(&[3, 2], vec![0.5f32; 6]).unwrap();
    let bytes = checkpoint::encode(&[("w".to_string(), t)]).unwrap();
    let mut bad = bytes.clone();
    bad[1] = b'Q';
    assert!(matches!(checkpoint::decode::<f32>(p, &bad), Err(Error::BadMagic { .. })));
    assert!(matches!(checkpoint::decode::<f32>(p, b"CK"), Err(Error::BadMagic { .. })));
    for n in 4..bytes.len() {
        assert!(matches!(checkpoint::decode::<f32>(p, &bytes[..n]), Err(Error::Truncated { .. })), "{n}");
    }
    let mut long = bytes.clone();
    long.push(0);
    assert!(matches!(checkpoint::decode::<f32>(p, &long), Err(Error::Format { .. })));
    assert!(matches!(checkpoint::read::<f32>(Path::new("/nonexistent/x.ckpt")), Err(Error::MissingFile(_))));
}

#[test]
fn amap_round_trip_and_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let map = Tensor::new(&[4, 3], (0..12).map(|i| i as f32 * 0.37 - 1.0).collect()).unwrap();
    let bytes = encode_amap(&map).unwrap();
    assert_eq!(&bytes[..4], b"AMP1");
    assert_eq!(bytes.len(), 12 + 48);
    assert_eq!(bits(&decode_amap(Path::new("m"), &bytes).unwrap()), bits(&map));

    store_precomputed(tmp.path(), "vid", 7, &map).unwrap();
    assert!(tmp.path().join("vid/7.amap").exists());
    assert_eq!(bits(&load_precomputed(tmp.path(), "vid", 7).unwrap().full_map), bits(&map));
    assert!(matches!(load_precomputed(tmp.path(), "vid", 8), Err(Error::MissingFile(_))));

    let p = Path::new("m");
    assert!(matches!(decode_amap(p, b"AMP2\0\0\0\0"), Err(Error::BadMagic { .. })));
    for n in 4..bytes.len() {
        assert!(matches!(decode_amap(p, &bytes[..n]), Err(Error::Truncated { .. })), "{n}");
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = SceneConfig {
        resolution: [16, 16],
        clip_length: 10,
        train_clips: 2,
        distill_clips: 1,
        test_clips: 2,
        normal_size: [2, 3],
        oversized_size: [6, 8],
        ..SceneConfig::default()
    };
    let ds = generate_dataset(&scene).unwrap();
    write_dataset(tmp.path(), &ds).unwrap();
    let back = load_dataset(tmp.path()).unwrap();
    assert_eq!(back.test, ds.test);
    assert_eq!(back.distill, ds.distill);
    assert_eq!(back.train.iter().map(|c| &c.frames).collect::<Vec<_>>(), ds.train.iter().map(|c| &c.frames).collect::<Vec<_>>());
}
