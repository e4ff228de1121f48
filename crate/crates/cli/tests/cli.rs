//! End-to-end runs of the `wavemix` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use wavemix::data::{write_cifar, CifarVariant, Sample};
use wavemix::Tensor;

fn wavemix(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavemix"))
        .args(args)
        .env_remove("WAVEMIX_DATA_ROOT")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fake_cifar10(dir: &Path, per_file: usize) {
    let sample = |seed: usize| Sample {
        image: Tensor::from_fn(&[3, 32, 32], |j| ((seed * 31 + j * 17) % 256) as f64 / 255.0),
        label: seed % 10,
    };
    for f in 1..=5 {
        let s: Vec<_> = (0..per_file).map(|i| sample(f * 1000 + i)).collect();
        fs::write(dir.join(format!("data_batch_{f}.bin")), write_cifar(&s, CifarVariant::Cifar10).unwrap()).unwrap();
    }
    let s: Vec<_> = (0..per_file).map(sample).collect();
    fs::write(dir.join("test_batch.bin"), write_cifar(&s, CifarVariant::Cifar10).unwrap()).unwrap();
}

const TINY: [&str; 6] = ["--set", "depth=1", "--set", "dim=16", "--set", "batch_size=64"];

#[test]
fn cifar_one_epoch_smoke_run() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    fake_cifar10(data.path(), 128);
    let mut args = vec![
        "train", "--mixer", "mwa", "--dataset", "cifar10", "--epochs", "1", "--subset", "512",
        "--data-root", data.path().to_str().unwrap(), "--out", out.path().to_str().unwrap(),
    ];
    args.extend(TINY);
    let o = wavemix(&args);
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let metrics = fs::read_to_string(out.path().join("metrics.tsv")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    assert_eq!(metrics.lines().next().unwrap().split('\t').count(), 5);
    assert!(out.path().join("best.wvmx").exists());
    let report = fs::read_to_string(out.path().join("report.tsv")).unwrap();
    assert!(report.starts_with("# provenance sha256 "));
    assert!(report.contains("Model\tParameters (M)\tFlops (G)\tTop-1 (%)\tTop-5 (%)\n"));
    assert!(report.lines().any(|l| l.starts_with("MWA\t")));
    let config = fs::read_to_string(out.path().join("config.txt")).unwrap();
    assert!(config.contains("subset = 512"));
    assert!(config.contains("depth = 1"));
}

#[test]
fn synthetic_run_is_reproducible() {
    let run = || {
        let out = tempfile::tempdir().unwrap();
        let mut args = vec![
            "train", "--mixer", "gfn", "--dataset", "synthetic", "--epochs", "2", "--seed", "3",
            "--set", "synthetic_train=64", "--set", "synthetic_test=32", "--out", out.path().to_str().unwrap(),
        ];
        args.extend(TINY);
        let o = wavemix(&args);
        assert!(o.status.success(), "stderr: {}", stderr(&o));
        fs::read_to_string(out.path().join("metrics.tsv")).unwrap()
    };
    let a = run();
    assert_eq!(a.lines().count(), 2);
    assert_eq!(a, run());
}

#[test]
fn indivisible_patch_exits_with_config_code() {
    let o = wavemix(&["train", "--mixer", "mwa", "--patch", "5", "--dataset", "synthetic"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.trim().lines().count(), 1, "{err}");
    assert!(err.contains("divisible"), "{err}");
}

#[test]
fn missing_dataset_root_exits_with_data_code() {
    let o = wavemix(&["train", "--dataset", "cifar10", "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("WAVEMIX_DATA_ROOT"));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "# tiny\nmixer = sa\ndepth = 2\ndim = 32\n").unwrap();
    let o = wavemix(&["cost", "--config", path.to_str().unwrap(), "--set", "depth=3", "--mixer", "gfn"]);
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("#   mixer = gfn"));
    assert!(s.contains("#   depth = 3"));
    assert!(s.contains("#   dim = 32"));

    fs::write(&path, "depht = 2\n").unwrap();
    let o = wavemix(&["cost", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("depht"));
}

#[test]
fn verify_passes_on_clean_build() {
    let o = wavemix(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let s = stdout(&o);
    assert!(s.lines().filter(|l| l.starts_with("PASS")).count() >= 30);
    assert!(!s.lines().any(|l| l.starts_with("FAIL")));
}

#[test]
fn verify_filter_by_module() {
    let o = wavemix(&["verify", "--only", "transforms"]);
    assert!(o.status.success());
    let lines: Vec<_> = stdout(&o).lines().filter(|l| l.starts_with("PASS")).map(String::from).collect();
    assert!(!lines.is_empty());
    assert!(lines.iter().all(|l| l.contains("transforms")));
    assert_eq!(wavemix(&["verify", "--only", "nope"]).status.code(), Some(2));
}

#[test]
fn flipped_haar_tap_fails_verify() {
    let o = wavemix(&["verify", "--inject-fault", "flip-haar-tap"]);
    assert_eq!(o.status.code(), Some(5));
    let s = stdout(&o);
    assert!(s.lines().any(|l| l.starts_with("FAIL") && l.contains("perfect_reconstruction")), "{s}");
    assert!(stderr(&o).contains("perfect_reconstruction"));
}

#[test]
fn cost_reports_all_rows() {
    let o = wavemix(&["cost", "--mixer", "sa"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for label in ["SA", "GFN", "AFNO", "MWA"] {
        assert!(s.lines().any(|l| l.starts_with(&format!("#   {label}\t"))), "{label}: {s}");
    }
    assert!(s.contains("442368"), "{s}");
}

#[test]
fn bench_mwa_cost_is_linear_in_tokens() {
    let o = wavemix(&["bench", "--sizes", "64,256", "--d", "16"]);
    assert!(o.status.success(), "stderr: {}", stderr(&o));
    let s = stdout(&o);
    assert_eq!(s.lines().next().unwrap(), "mixer\tN\td\tmultadds\tseconds");
    let cost = |mixer: &str, n: &str| -> u64 {
        s.lines()
            .map(|l| l.split('\t').collect::<Vec<_>>())
            .find(|f| f[0] == mixer && f[1] == n)
            .unwrap()[3]
            .parse()
            .unwrap()
    };
    assert_eq!(cost("mwa", "256"), 4 * cost("mwa", "64"));
    assert!(cost("sa", "256") > 4 * cost("sa", "64"));
    assert_eq!(wavemix(&["bench", "--sizes", "63"]).status.code(), Some(2));
}
