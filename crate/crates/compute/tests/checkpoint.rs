use cdds_compute::checkpoint::Checkpoint;
use cdds_compute::{rng, ComputeError, ParameterStore, Tensor};

fn store(d: usize) -> ParameterStore<f32> {
    let mut r = rng::stream(0, rng::INIT);
    let mut s = ParameterStore::new(0);
    s.init_glorot("gin.layer0.w", 133, d, &mut r);
    s.init_const("gin.layer0.b", d, 0.0);
    s.insert("norm.mean", Tensor::matrix(1, 3, vec![0.5, f32::MIN_POSITIVE, -0.0]).unwrap(), false);
    s
}

#[test]
fn roundtrip_is_bit_exact() {
    let s = store(64);
    let ck = Checkpoint::from_store("[model]\nd = 64\n", &s);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.config, ck.config);
    let mut fresh = store(64);
    fresh.insert("gin.layer0.w", Tensor::zeros(&[133, 64]), true);
    back.apply_to(&mut fresh).unwrap();
    for ((n1, a, t1), (n2, b, t2)) in s.iter().zip(fresh.iter()) {
        assert_eq!((n1, t1), (n2, t2));
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b), "{n1}");
        assert_eq!(a.shape(), b.shape());
    }
    assert_eq!(ck.to_bytes().unwrap(), back.to_bytes().unwrap());
}

#[test]
fn truncated_file_is_rejected() {
    let bytes = Checkpoint::from_store("cfg", &store(8)).to_bytes().unwrap();
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, ComputeError::TruncatedCheckpoint), "cut {cut}: {err}");
    }
}

#[test]
fn bad_magic_and_version() {
    let mut bytes = Checkpoint::from_store("cfg", &store(8)).to_bytes().unwrap();
    bytes[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(ComputeError::UnsupportedVersion(9))));
    bytes[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(ComputeError::BadMagic)));
}

#[test]
fn shape_mismatch_names_parameter() {
    let ck = Checkpoint::from_store("cfg", &store(64));
    let mut small = store(32);
    match ck.apply_to(&mut small) {
        Err(ComputeError::ParameterShape { name, expected, found }) => {
            assert_eq!(name, "gin.layer0.b");
            assert_eq!(expected, vec![1, 32]);
            assert_eq!(found, vec![1, 64]);
        }
        other => panic!("{other:?}"),
    }
}
