//! Schedule, clipping and end-to-end fitting.

use proptest::prelude::*;
use wavemix::backbone::{ModelConfig, VitModel};
use wavemix::data::synthetic_classification;
use wavemix::mixers::MixerKind;
use wavemix::training::{clip_global_norm, evaluate, fit, lr_at, FitOptions, TrainConfig};
use wavemix::Tensor;

fn schedule(epochs: usize, warmup: usize, base: f64, min: f64) -> TrainConfig {
    TrainConfig { epochs, warmup_epochs: warmup, base_lr: base, min_lr: min, ..TrainConfig::default() }
}

proptest! {
    #[test]
    fn lr_warms_up_then_decays_to_min(epochs in 2usize..400, warmup_frac in 0.0f64..0.5, base in 1e-5f64..1e-2, min_frac in 0.0f64..1.0) {
        let warmup = ((epochs as f64 * warmup_frac) as usize).min(epochs - 1);
        let cfg = schedule(epochs, warmup, base, base * min_frac);
        let lrs: Vec<f64> = (0..epochs).map(|e| lr_at(e, &cfg)).collect();
        for e in 0..warmup {
            prop_assert!(lrs[e] > 0.0 && lrs[e] <= base * (1.0 + 1e-12));
            prop_assert!(lrs[e + 1] >= lrs[e]);
        }
        prop_assert_eq!(lrs[warmup], base);
        for e in warmup..epochs - 1 {
            prop_assert!(lrs[e + 1] <= lrs[e]);
        }
        if epochs - warmup > 1 {
            prop_assert!((lrs[epochs - 1] - cfg.min_lr).abs() <= 1e-15);
        }
    }

    #[test]
    fn clipping_never_grows_any_gradient(vals in prop::collection::vec(-10.0f64..10.0, 1..40), split in 0usize..40, max in 0.01f64..20.0) {
        let split = split.min(vals.len());
        let mut a = Tensor::from_vec(vals[..split].to_vec());
        let mut b = Tensor::from_vec(vals[split..].to_vec());
        let before: Vec<f64> = vals.iter().map(|v| v.abs()).collect();
        let scale = clip_global_norm([&mut a, &mut b], max);
        prop_assert!(scale > 0.0 && scale <= 1.0);
        let after: Vec<f64> = a.data().iter().chain(b.data()).map(|v| v.abs()).collect();
        prop_assert!(after.iter().zip(&before).all(|(x, y)| x <= y));
        let norm = (a.sq_norm() + b.sq_norm()).sqrt();
        prop_assert!(norm <= max * (1.0 + 1e-12));
    }
}

#[test]
fn midpoint_and_final_epoch_values() {
    let cfg = TrainConfig::default();
    assert!((lr_at(2, &cfg) - 3e-4).abs() < 1e-18);
    assert!((lr_at(5 + 147, &cfg) - 2.55e-4).abs() < 1e-18);
    assert_eq!(lr_at(299, &cfg), 1e-5);
}

#[test]
fn zero_learning_rate_freezes_every_parameter() {
    let cfg = ModelConfig { depth: 1, dim: 8, heads: 2, mixer: MixerKind::Sa, classes: 4, image: (3, 8, 8), ..ModelConfig::default() };
    let mut model = VitModel::new(cfg, 3).unwrap();
    let before = model.store.clone();
    let data = synthetic_classification(16, (8, 8), 4, 5);
    let tc = TrainConfig { epochs: 3, warmup_epochs: 1, base_lr: 0.0, min_lr: 0.0, batch_size: 4, ..TrainConfig::default() };
    fit(&mut model, &data, &data, &tc, &FitOptions::default()).unwrap();
    for ((_, a), (_, b)) in before.iter().zip(model.store.iter()) {
        assert!(a.tensor.value.data().iter().zip(b.tensor.value.data()).all(|(x, y)| x.to_bits() == y.to_bits()), "{}", a.name);
    }
}

#[test]
fn top5_never_below_top1() {
    for kind in MixerKind::ALL {
        let cfg = ModelConfig { depth: 1, dim: 8, heads: 2, mixer: kind, classes: 10, image: (3, 8, 8), ..ModelConfig::default() };
        let model = VitModel::new(cfg, 1).unwrap();
        let e = evaluate(&model, &synthetic_classification(40, (8, 8), 10, 2), 16).unwrap();
        assert!(e.top5 >= e.top1, "{kind}: {e:?}");
        assert!(e.loss.is_finite());
    }
}

#[test]
fn depth_two_mwa_fits_small_synthetic_set() {
    let cfg = ModelConfig { depth: 2, dim: 32, heads: 4, mixer: MixerKind::Mwa, classes: 10, image: (3, 32, 32), ..ModelConfig::default() };
    let mut model = VitModel::new(cfg, 0).unwrap();
    let data = synthetic_classification(64, (32, 32), 10, 11);
    let data = { let n = data.compute_normalization().unwrap(); data.with_normalization(n) };
    let tc = TrainConfig { epochs: 200, batch_size: 16, ..TrainConfig::default() };
    let opts = FitOptions { stop_at_train_top1: Some(100.0), ..FitOptions::default() };
    let h = fit(&mut model, &data, &data, &tc, &opts).unwrap();
    let last = h.last().unwrap();
    assert_eq!(last.train_eval.unwrap().top1, 100.0, "stopped after {} epochs", h.epochs.len());
}
