//! CIFAR ingestion against hand-built batch files.

use std::fs;
use std::path::Path;

use proptest::prelude::*;
use wavemix::data::{self, load_cifar10, load_cifar100, parse_cifar, write_cifar, CifarVariant, Sample};
use wavemix::{Error, Tensor};

fn byte_sample(seed: usize, label: usize) -> Sample {
    let data = (0..3072).map(|j| ((seed * 131 + j * 7) % 256) as f64 / 255.0).collect();
    Sample { image: Tensor::new(&[3, 32, 32], data).unwrap(), label }
}

fn write_cifar10_dir(dir: &Path, per_file: usize) {
    for f in 1..=5 {
        let samples: Vec<_> = (0..per_file).map(|i| byte_sample(f * 100 + i, (f + i) % 10)).collect();
        fs::write(dir.join(format!("data_batch_{f}.bin")), write_cifar(&samples, CifarVariant::Cifar10).unwrap()).unwrap();
    }
    let test: Vec<_> = (0..per_file).map(|i| byte_sample(900 + i, i % 10)).collect();
    fs::write(dir.join("test_batch.bin"), write_cifar(&test, CifarVariant::Cifar10).unwrap()).unwrap();
}

#[test]
fn loads_standard_layout_and_shares_train_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let nested = dir.path().join("cifar-10-batches-bin");
    fs::create_dir(&nested).unwrap();
    write_cifar10_dir(&nested, 3);
    let (train, test) = load_cifar10(dir.path(), 0).unwrap();
    assert_eq!((train.len(), test.len(), train.classes), (15, 3, 10));
    assert_eq!(train.samples[0], byte_sample(100, 1));
    let norm = train.normalization.clone().unwrap();
    assert_eq!(norm, train.compute_normalization().unwrap());
    assert_eq!(test.normalization.as_ref(), Some(&norm));
    assert_ne!(test.compute_normalization().unwrap(), norm);
}

#[test]
fn loader_roundtrip_through_writer() {
    let dir = tempfile::tempdir().unwrap();
    write_cifar10_dir(dir.path(), 2);
    let (train, _) = load_cifar10(dir.path(), 0).unwrap();
    let bytes = write_cifar(&train.samples, CifarVariant::Cifar10).unwrap();
    let again = parse_cifar(&bytes, CifarVariant::Cifar10, "mem").unwrap();
    assert_eq!(again, train.samples);
}

#[test]
fn cifar100_directory() {
    let dir = tempfile::tempdir().unwrap();
    let samples: Vec<_> = (0..4).map(|i| byte_sample(i, 25 * i + 3)).collect();
    let bytes = write_cifar(&samples, CifarVariant::Cifar100).unwrap();
    fs::write(dir.path().join("train.bin"), &bytes).unwrap();
    fs::write(dir.path().join("test.bin"), &bytes).unwrap();
    let (train, _) = load_cifar100(dir.path(), 0).unwrap();
    assert_eq!(train.samples.iter().map(|s| s.label).collect::<Vec<_>>(), vec![3, 28, 53, 78]);
}

#[test]
fn corrupt_file_reports_path() {
    let dir = tempfile::tempdir().unwrap();
    write_cifar10_dir(dir.path(), 1);
    fs::write(dir.path().join("data_batch_3.bin"), vec![0u8; 3000]).unwrap();
    match load_cifar10(dir.path(), 0) {
        Err(Error::Format { path, offset, .. }) => {
            assert!(path.ends_with("data_batch_3.bin"));
            assert_eq!(offset, 0);
        }
        other => panic!("expected format error, got {other:?}"),
    }
}

#[test]
fn missing_directory_is_data_error() {
    assert!(matches!(load_cifar10(Path::new("/nonexistent/cifar"), 0), Err(Error::Data(_))));
}

#[test]
fn explicit_root_beats_environment() {
    let p = Path::new("/from/flag");
    assert_eq!(data::data_root(Some(p)).as_deref(), Some(p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn byte_records_roundtrip(bytes in prop::collection::vec(any::<u8>(), 3072), label in 0u8..10) {
        let mut rec = vec![label];
        rec.extend_from_slice(&bytes);
        let s = parse_cifar(&rec, CifarVariant::Cifar10, "mem").unwrap();
        prop_assert_eq!(write_cifar(&s, CifarVariant::Cifar10).unwrap(), rec);
        prop_assert!(s[0].image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn labels_at_or_above_ten_rejected(label in 10u8..=255) {
        let mut rec = vec![0u8; 3073];
        rec[0] = label;
        let is_format_error = matches!(parse_cifar(&rec, CifarVariant::Cifar10, "mem"), Err(Error::Format { .. }));
        prop_assert!(is_format_error);
    }
}
