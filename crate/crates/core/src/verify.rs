//! Runtime invariant suites, one per module, behind `wavemix verify`.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::backbone::{checkpoint, count_flops, count_params, ModelConfig, Table1Inputs, Table1Row, VitModel};
use crate::config::RunConfig;
use crate::data::{parse_cifar, synthetic_classification, write_cifar, CifarVariant};
use crate::error::{Error, Result};
use crate::functional;
use crate::gradcheck::{self, random_projection, GradCheckOptions};
use crate::mixers::{Activation, GfnParams, MixerKind, MwaConfig, MwaParams, SaParams};
use crate::params::ParamStore;
use crate::report;
use crate::tensor::Tensor;
use crate::training::{adam_step, clip_global_norm, evaluate, lr_at, OptimizerState, TrainConfig};
use crate::transforms::{dft2, dwt2_with_bank, idft2, idwt2_with_bank, FilterPair};

pub const MODULES: [&str; 7] = ["tensor-core", "transforms", "mixers", "backbone", "data-io", "training", "cli-report"];

/// Deliberate defects for exercising the suite itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Negates the second highpass tap, breaking perfect reconstruction.
    FlipHaarTap,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    pub only: Option<String>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub module: &'static str,
    pub name: &'static str,
    pub result: std::result::Result<(), String>,
    pub seconds: f64,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.result.is_ok()
    }

    pub fn line(&self) -> String {
        match &self.result {
            Ok(()) => format!("PASS\t{}\t{}\t{:.3}s", self.module, self.name, self.seconds),
            Err(e) => format!("FAIL\t{}\t{}\t{:.3}s\t{e}", self.module, self.name, self.seconds),
        }
    }
}

struct Ctx {
    bank: FilterPair,
}

type Check = fn(&Ctx) -> std::result::Result<(), String>;

pub struct Invariant {
    pub module: &'static str,
    pub name: &'static str,
    check: Check,
}

macro_rules! ok {
    ($e:expr) => {
        $e.map_err(|e: Error| e.to_string())?
    };
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn bits_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn grad_ok(name: &str, r: Result<gradcheck::GradCheckReport>) -> std::result::Result<(), String> {
    let r = ok!(r);
    ensure(r.passed(), || format!("{name}: {} of {} entries off, first {:?}", r.failures, r.checked, r.first_failure))
}

// tensor-core

fn grouped_conv_equals_slices(_: &Ctx) -> std::result::Result<(), String> {
    let (c, g, k) = (6, 3, 3);
    let x = rand_tensor(&[c, 5, 4], 1);
    let w = rand_tensor(&[c, c / g, k, k], 2);
    let y = ok!(functional::grouped_conv2d(&x, &w, g));
    let per = c / g;
    for gi in 0..g {
        let xs = ok!(Tensor::new(&[per, 5, 4], x.data()[gi * per * 20..(gi + 1) * per * 20].to_vec()));
        let wn = per * per * k * k;
        let ws = ok!(Tensor::new(&[per, per, k, k], w.data()[gi * wn..(gi + 1) * wn].to_vec()));
        let ys = ok!(functional::grouped_conv2d(&xs, &ws, 1));
        ensure(ys.data() == &y.data()[gi * per * 20..(gi + 1) * per * 20], || format!("group {gi} differs from its dense slice"))?;
    }
    Ok(())
}

fn softmax_properties(_: &Ctx) -> std::result::Result<(), String> {
    let x = [0.3, -1.2, 2.0, 0.0];
    let shifted: Vec<f64> = x.iter().map(|v| v + 100.0).collect();
    let (a, b) = (functional::softmax(&x), functional::softmax(&shifted));
    ensure((a.iter().sum::<f64>() - 1.0).abs() < 1e-12, || "softmax does not sum to 1".into())?;
    ensure(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12), || "softmax not shift invariant".into())
}

fn gelu_properties(_: &Ctx) -> std::result::Result<(), String> {
    ensure(functional::gelu_scalar(0.0) == 0.0, || "gelu(0) != 0".into())?;
    for i in -40..=40 {
        let x = i as f64 * 0.1;
        let odd = functional::gelu_scalar(x) - functional::gelu_scalar(-x);
        ensure((odd - x).abs() < 1e-12, || format!("gelu(x) - gelu(-x) != x at {x}"))?;
        if x >= 0.0 {
            ensure(functional::gelu_scalar(x + 0.1) > functional::gelu_scalar(x), || format!("gelu not increasing at {x}"))?;
        }
    }
    Ok(())
}

fn layer_norm_statistics(_: &Ctx) -> std::result::Result<(), String> {
    let x = rand_tensor(&[16, 3, 3], 4).map(|v| 5.0 * v + 2.0);
    let y = ok!(functional::layer_norm(&x, &Tensor::full(&[16], 1.0), &Tensor::zeros(&[16]), 1e-12));
    for p in 0..9 {
        let col: Vec<f64> = (0..16).map(|c| y.data()[c * 9 + p]).collect();
        let mean = col.iter().sum::<f64>() / 16.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
        ensure(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9, || format!("token {p}: mean {mean}, var {var}"))?;
    }
    Ok(())
}

fn op_gradients(ctx: &Ctx) -> std::result::Result<(), String> {
    let bank = ctx.bank.clone();
    let x = rand_tensor(&[2, 4, 4, 4], 5);
    let w = rand_tensor(&[4, 2, 3, 3], 6);
    let gain = rand_tensor(&[4], 7);
    grad_ok(
        "conv/layer_norm/gelu",
        gradcheck::check_inputs(&[x.clone(), w, gain.clone(), gain], |t, v| {
            let y = t.conv2d(v[0], v[1], 2)?;
            let y = t.layer_norm(y, v[2], v[3], 1e-5)?;
            let y = t.gelu(y);
            random_projection(t, y, 1)
        }),
    )?;
    grad_ok(
        "haar",
        gradcheck::check_inputs(std::slice::from_ref(&x), move |t, v| {
            t.set_filter_bank(bank.clone());
            let z = t.haar_analysis(v[0])?;
            let y = t.haar_synthesis(z)?;
            let y = t.mul(y, v[0])?;
            random_projection(t, y, 2)
        }),
    )?;
    let qkv = rand_tensor(&[1, 12, 2, 2], 8);
    grad_ok(
        "attention",
        gradcheck::check_inputs(&[qkv], |t, v| {
            let y = t.attention(v[0], 2)?;
            random_projection(t, y, 3)
        }),
    )?;
    let (re, im) = (rand_tensor(&[2, 4, 3], 9), rand_tensor(&[2, 4, 3], 10));
    grad_ok(
        "spectral filter",
        gradcheck::check_inputs(&[rand_tensor(&[1, 2, 4, 4], 11), re, im], |t, v| {
            let y = t.spectral_filter(v[0], v[1], v[2])?;
            random_projection(t, y, 4)
        }),
    )
}

// transforms

fn perfect_reconstruction(ctx: &Ctx) -> std::result::Result<(), String> {
    for seed in 0..10 {
        let x = rand_tensor(&[8, 16, 16], seed);
        for level in 1..=2 {
            let back = ok!(idwt2_with_bank(&ok!(dwt2_with_bank(&x, level, &ctx.bank)), &ctx.bank));
            let err = back.max_abs_diff(&x);
            ensure(err <= 1e-10, || format!("seed {seed} level {level}: reconstruction error {err:.3e}"))?;
        }
    }
    Ok(())
}

fn energy_preservation(ctx: &Ctx) -> std::result::Result<(), String> {
    for seed in 0..10 {
        let x = rand_tensor(&[8, 16, 16], 100 + seed);
        let e = ok!(dwt2_with_bank(&x, 2, &ctx.bank)).energy();
        let rel = (e - x.sq_norm()).abs() / x.sq_norm();
        ensure(rel <= 1e-12, || format!("seed {seed}: relative energy gap {rel:.3e}"))?;
    }
    Ok(())
}

fn hand_oracle(ctx: &Ctx) -> std::result::Result<(), String> {
    let x = ok!(Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]));
    let z = ok!(dwt2_with_bank(&x, 1, &ctx.bank));
    let got = [z.ll.data()[0], z.details[0].lh.data()[0], z.details[0].hl.data()[0], z.details[0].hh.data()[0]];
    let want = [5.0, -2.0, -1.0, 0.0];
    ensure(got.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12), || format!("got {got:?}, want {want:?}"))
}

fn dwt_linearity(ctx: &Ctx) -> std::result::Result<(), String> {
    let (x, y) = (rand_tensor(&[2, 8, 8], 1), rand_tensor(&[2, 8, 8], 2));
    let combo = Tensor::from_fn(&[2, 8, 8], |i| 2.0 * x.data()[i] - 3.0 * y.data()[i]);
    let (zx, zy, zc) = (ok!(dwt2_with_bank(&x, 2, &ctx.bank)), ok!(dwt2_with_bank(&y, 2, &ctx.bank)), ok!(dwt2_with_bank(&combo, 2, &ctx.bank)));
    let expect = Tensor::from_fn(zc.ll.shape(), |i| 2.0 * zx.ll.data()[i] - 3.0 * zy.ll.data()[i]);
    ensure(zc.ll.max_abs_diff(&expect) < 1e-12, || "LL band is not linear".into())
}

fn naive_dft2(x: &Tensor) -> Vec<Complex64> {
    let &[c, h, w] = x.shape() else { unreachable!() };
    let mut out = vec![Complex64::new(0.0, 0.0); c * h * w];
    for ch in 0..c {
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..h {
                    for b in 0..w {
                        let phase = -2.0 * PI * ((u * a) as f64 / h as f64 + (v * b) as f64 / w as f64);
                        acc += x.data()[(ch * h + a) * w + b] * Complex64::from_polar(1.0, phase);
                    }
                }
                out[(ch * h + u) * w + v] = acc;
            }
        }
    }
    out
}

fn fft_matches_naive(_: &Ctx) -> std::result::Result<(), String> {
    for n in [8, 16] {
        let x = rand_tensor(&[2, n, n], n as u64);
        let fast = ok!(dft2(&x));
        let slow = naive_dft2(&x);
        let err = fast.data.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("{n}x{n}: max error {err:.3e}"))?;
        let back = ok!(idft2(&fast));
        ensure(back.max_abs_diff(&x) <= 1e-12, || format!("{n}x{n}: inverse does not round-trip"))?;
    }
    Ok(())
}

fn indivisible_grid_rejected(ctx: &Ctx) -> std::result::Result<(), String> {
    ensure(dwt2_with_bank(&Tensor::zeros(&[1, 6, 6]), 2, &ctx.bank).is_err(), || "6x6 accepted at level 2".into())
}

// mixers

fn naive_attention(x: &Tensor, wqkv: &Tensor, wout: &Tensor, heads: usize) -> Vec<f64> {
    let &[d, h, w] = x.shape() else { unreachable!() };
    let n = h * w;
    let dh = d / heads;
    let tok = |c: usize, i: usize| x.data()[c * n + i];
    let proj = |row: usize, i: usize| (0..d).map(|c| wqkv.data()[row * d + c] * tok(c, i)).sum::<f64>();
    let mut mixed = vec![0.0; d * n];
    for hd in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| (0..dh).map(|e| proj(hd * dh + e, i) * proj(d + hd * dh + e, j)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            for e in 0..dh {
                mixed[(hd * dh + e) * n + i] = (0..n).map(|j| (scores[j] - m).exp() / z * proj(2 * d + hd * dh + e, j)).sum();
            }
        }
    }
    (0..d * n).map(|k| (0..d).map(|c| wout.data()[(k / n) * d + c] * mixed[c * n + k % n]).sum()).collect()
}

fn attention_oracle(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (d, heads, h, w) in [(4, 1, 2, 2), (8, 2, 2, 4), (6, 3, 1, 5)] {
        let mut store = ParamStore::new();
        let sa = ok!(SaParams::new(&mut store, "sa", d, heads, &mut rng));
        let x = rand_tensor(&[d, h, w], d as u64);
        let y = ok!(sa.apply(&store, &x));
        let want = naive_attention(&x, store.value(sa.w_qkv), store.value(sa.w_out), heads);
        let err = y.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-12, || format!("d={d} heads={heads} N={}: error {err:.3e}", h * w))?;
    }
    Ok(())
}

fn gfn_reference_filters(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::new();
    let gfn = ok!(GfnParams::new(&mut store, "gfn", 3, (4, 6), &mut rng));
    let x = rand_tensor(&[3, 4, 6], 2);
    store.value_mut(gfn.re).fill(1.0);
    store.value_mut(gfn.im).fill(0.0);
    let err = ok!(gfn.apply(&store, &x)).max_abs_diff(&x);
    ensure(err <= 1e-9, || format!("identity filter error {err:.3e}"))?;
    store.value_mut(gfn.re).fill(0.0);
    ensure(ok!(gfn.apply(&store, &x)).max_abs() <= 1e-12, || "zero filter leaks".into())?;
    // DC-only filter keeps the per-channel mean.
    for c in 0..3 {
        store.value_mut(gfn.re).set(&[c, 0, 0], 1.0);
    }
    let y = ok!(gfn.apply(&store, &x));
    for c in 0..3 {
        let mean = x.data()[c * 24..(c + 1) * 24].iter().sum::<f64>() / 24.0;
        ensure(y.data()[c * 24..(c + 1) * 24].iter().all(|v| (v - mean).abs() < 1e-12), || format!("channel {c} is not its mean"))?;
    }
    Ok(())
}

fn mwa_linear_without_activation(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let cfg = MwaConfig { g_wave: 2, g_skip3: 2, ..MwaConfig::default() };
    let mwa = ok!(MwaParams::new(&mut store, "mwa", 4, cfg, &mut rng));
    let run = |x: &Tensor| -> Result<Tensor> {
        let mut t = Tape::inference();
        let v = t.constant(x.clone());
        let y = mwa.forward_with(&mut t, &store, v, Activation::Identity)?;
        Ok(t.value(y).clone())
    };
    let (a, b) = (rand_tensor(&[1, 4, 8, 8], 1), rand_tensor(&[1, 4, 8, 8], 2));
    let combo = Tensor::from_fn(a.shape(), |i| 0.5 * a.data()[i] + 2.0 * b.data()[i]);
    let (ya, yb, yc) = (ok!(run(&a)), ok!(run(&b)), ok!(run(&combo)));
    let expect = Tensor::from_fn(ya.shape(), |i| 0.5 * ya.data()[i] + 2.0 * yb.data()[i]);
    let err = yc.max_abs_diff(&expect);
    ensure(err < 1e-12, || format!("superposition error {err:.3e}"))
}

fn mwa_any_grid(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let mwa = ok!(MwaParams::new(&mut store, "mwa", 4, MwaConfig::default(), &mut rng));
    for s in [8, 16, 32] {
        let y = ok!(mwa.apply(&store, &rand_tensor(&[4, s, s], s as u64)));
        ensure(y.shape() == [4, s, s] && y.all_finite(), || format!("{s}x{s} output {:?}", y.shape()))?;
    }
    Ok(())
}

fn mixer_param_counts(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 8;
    let cfg = MwaConfig { g_wave: 2, g_skip1: 4, g_skip3: 8, ..MwaConfig::default() };
    let mut store = ParamStore::new();
    ok!(MwaParams::new(&mut store, "m", d, cfg, &mut rng));
    ensure(store.numel() == (9 * d / 2 + d / 4 + 9 * d / 8) * d, || format!("MWA has {} parameters", store.numel()))?;
    let mut store = ParamStore::new();
    ok!(SaParams::new(&mut store, "s", d, 2, &mut rng));
    ensure(store.numel() == 4 * d * d, || format!("SA has {} parameters", store.numel()))?;
    let mut store = ParamStore::new();
    ok!(GfnParams::new(&mut store, "g", d, (4, 6), &mut rng));
    ensure(store.numel() == 2 * d * 4 * 4, || format!("GFN has {} parameters", store.numel()))
}

fn mixer_gradients(_: &Ctx) -> std::result::Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&[1, 4, 4, 4], 8);
    let mut store = ParamStore::new();
    let mwa = ok!(MwaParams::new(&mut store, "mwa", 4, MwaConfig { g_skip3: 2, ..MwaConfig::default() }, &mut rng));
    let sa = ok!(SaParams::new(&mut store, "sa", 4, 2, &mut rng));
    let gfn = ok!(GfnParams::new(&mut store, "gfn", 4, (4, 4), &mut rng));
    grad_ok(
        "mixers",
        gradcheck::check(
            &store,
            &[x],
            |t, s, v| {
                let a = mwa.forward(t, s, v[0])?;
                let b = sa.forward(t, s, a)?;
                let c = gfn.forward(t, s, b)?;
                random_projection(t, c, 5)
            },
            GradCheckOptions::default(),
        ),
    )
}

// backbone

fn micro(mixer: MixerKind) -> ModelConfig {
    ModelConfig { depth: 1, dim: 8, patch: 4, mixer, classes: 3, image: (3, 8, 8), heads: 2, ..ModelConfig::default() }
}

fn forward_deterministic(_: &Ctx) -> std::result::Result<(), String> {
    for kind in MixerKind::ALL {
        let model = ok!(VitModel::new(micro(kind), 1));
        let img = rand_tensor(&[2, 3, 8, 8], 2);
        ensure(bits_equal(&ok!(model.logits(&img)), &ok!(model.logits(&img))), || format!("{kind} forward not reproducible"))?;
    }
    Ok(())
}

fn mixers_pluggable(_: &Ctx) -> std::result::Result<(), String> {
    let counts: Vec<_> = MixerKind::ALL
        .iter()
        .map(|&k| VitModel::new(ModelConfig { depth: 2, ..micro(k) }, 0).map(|m| count_params(&m).params))
        .collect::<Result<_>>()
        .map_err(|e| e.to_string())?;
    ensure(counts.iter().all(|c| c.non_mixer() == counts[0].non_mixer()), || "non-mixer parameters depend on mixer kind".into())
}

fn model_gradients(_: &Ctx) -> std::result::Result<(), String> {
    for kind in MixerKind::ALL {
        let model = ok!(VitModel::new(micro(kind), 3));
        grad_ok(
            kind.name(),
            gradcheck::check(
                &model.store,
                &[rand_tensor(&[2, 3, 8, 8], 4)],
                |t, s, v| {
                    let mut m = model.clone();
                    m.store = s.clone();
                    let logits = m.forward(t, v[0])?;
                    t.cross_entropy(logits, &[1, 2])
                },
                GradCheckOptions::default(),
            ),
        )?;
    }
    Ok(())
}

fn mwa_flops_linear(_: &Ctx) -> std::result::Result<(), String> {
    let at = |m: usize| -> Result<u64> {
        let cfg = ModelConfig { depth: 2, dim: 8, classes: 3, image: (3, m, m), ..ModelConfig::default() };
        Ok(count_flops(&VitModel::new(cfg, 0)?, (3, m, m))?.flops.expect("counted").flops_without_head())
    };
    let (a, b) = (ok!(at(32)), ok!(at(64)));
    ensure(b == 4 * a, || format!("8x8 -> 16x16 grid: {a} -> {b} FLOPs"))
}

fn checkpoint_roundtrip(_: &Ctx) -> std::result::Result<(), String> {
    let model = ok!(VitModel::new(micro(MixerKind::Mwa), 5));
    let bytes = ok!(checkpoint::encode(&model.store));
    let back = ok!(checkpoint::decode(&bytes, "memory"));
    ensure(
        back.iter().zip(model.store.iter()).all(|((n, t), (_, p))| *n == p.name && bits_equal(t, &p.tensor.value)),
        || "decoded tensors differ".into(),
    )?;
    ensure(checkpoint::decode(&bytes[..bytes.len() - 1], "memory").is_err(), || "truncated checkpoint accepted".into())
}

// data-io

fn cifar_roundtrip(_: &Ctx) -> std::result::Result<(), String> {
    let mut bytes = Vec::new();
    for r in 0..3u8 {
        bytes.push(r * 3);
        bytes.extend((0..3072).map(|i| (i as u8).wrapping_mul(r + 1)));
    }
    let samples = ok!(parse_cifar(&bytes, CifarVariant::Cifar10, "memory"));
    ensure(ok!(write_cifar(&samples, CifarVariant::Cifar10)) == bytes, || "rewritten bytes differ".into())?;
    bytes[3073] = 10;
    ensure(matches!(parse_cifar(&bytes, CifarVariant::Cifar10, "memory"), Err(Error::Format { .. })), || "label 10 accepted".into())
}

fn shuffle_reproducible(_: &Ctx) -> std::result::Result<(), String> {
    let s = synthetic_classification(64, (8, 8), 4, 3);
    ensure(s.permutation(0) == s.permutation(0), || "same epoch, different order".into())?;
    ensure(s.permutation(0) != s.permutation(1), || "consecutive epochs share an order".into())?;
    ensure(ok!(s.subset(10, 9)) == ok!(s.subset(10, 9)), || "subset not a function of seed".into())
}

fn synthetic_deterministic(_: &Ctx) -> std::result::Result<(), String> {
    let (a, b) = (synthetic_classification(8, (16, 16), 4, 7), synthetic_classification(8, (16, 16), 4, 7));
    ensure(a.samples.iter().zip(&b.samples).all(|(x, y)| x.label == y.label && bits_equal(&x.image, &y.image)), || "regenerated set differs".into())
}

fn normalization_from_train(_: &Ctx) -> std::result::Result<(), String> {
    let train = synthetic_classification(16, (8, 8), 4, 1);
    let test = synthetic_classification(8, (8, 8), 4, 2);
    let norm = ok!(train.compute_normalization());
    let test = test.with_normalization(norm.clone());
    let (batch, _) = test.batch(&[0], None);
    let raw = test.samples[0].image.data()[0];
    ensure((batch.data()[0] - (raw - norm.mean[0]) / norm.std[0]).abs() < 1e-15, || "test batch not normalized with train statistics".into())
}

// training

fn schedule_shape(_: &Ctx) -> std::result::Result<(), String> {
    let cfg = TrainConfig::default();
    ensure(lr_at(cfg.warmup_epochs - 1, &cfg) == cfg.base_lr && lr_at(cfg.warmup_epochs, &cfg) == cfg.base_lr, || "discontinuous at warmup end".into())?;
    ensure(lr_at(cfg.epochs - 1, &cfg) == cfg.min_lr, || "last epoch is not min_lr".into())?;
    ensure((cfg.warmup_epochs..cfg.epochs - 1).all(|e| lr_at(e + 1, &cfg) <= lr_at(e, &cfg)), || "cosine phase increases".into())
}

fn clipping_never_grows(_: &Ctx) -> std::result::Result<(), String> {
    for (seed, max) in [(1, 0.5), (2, 100.0)] {
        let orig = [rand_tensor(&[5], seed), rand_tensor(&[3, 2], seed + 10)];
        let mut g = orig.clone();
        let s = clip_global_norm(g.iter_mut(), max);
        let norm = g.iter().map(|t| t.sq_norm()).sum::<f64>().sqrt();
        ensure(s <= 1.0 && norm <= max * (1.0 + 1e-12), || format!("scale {s}, norm {norm}"))?;
        ensure(g.iter().zip(&orig).all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.abs() <= y.abs())), || "an entry grew".into())?;
    }
    Ok(())
}

fn adam_reference_step(_: &Ctx) -> std::result::Result<(), String> {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_vec(vec![0.0]), false);
    store.get_mut(id).tensor.grad = Tensor::from_vec(vec![0.1]);
    let mut st = OptimizerState::new(&store);
    ok!(adam_step(&mut store, &mut st, 1e-3, &TrainConfig::default()));
    let delta = -store.value(id).data()[0];
    ensure((delta - 9.99999e-4).abs() < 1e-9, || format!("first step moved {delta}"))
}

fn quadratic_descends(_: &Ctx) -> std::result::Result<(), String> {
    let mut store = ParamStore::new();
    let id = store.add("w", Tensor::from_vec(vec![2.0, -1.0]), false);
    let loss = |s: &ParamStore| s.value(id).sq_norm();
    let before = loss(&store);
    let v = store.value(id).clone();
    store.get_mut(id).tensor.grad = v.map(|x| 2.0 * x);
    let mut st = OptimizerState::new(&store);
    ok!(adam_step(&mut store, &mut st, 0.1, &TrainConfig::default()));
    ensure(loss(&store) < before, || "loss did not decrease".into())
}

fn zero_lr_freezes(_: &Ctx) -> std::result::Result<(), String> {
    let mut model = ok!(VitModel::new(micro(MixerKind::Mwa), 2));
    let before = model.store.clone();
    let data = synthetic_classification(8, (8, 8), 3, 1);
    let cfg = TrainConfig { epochs: 2, warmup_epochs: 1, base_lr: 0.0, min_lr: 0.0, batch_size: 4, ..TrainConfig::default() };
    ok!(crate::training::fit(&mut model, &data, &data, &cfg, &Default::default()));
    let same = model.store.iter().zip(before.iter()).all(|((_, a), (_, b))| bits_equal(&a.tensor.value, &b.tensor.value));
    ensure(same, || "parameters moved at lr=0".into())
}

fn top5_at_least_top1(_: &Ctx) -> std::result::Result<(), String> {
    let model = ok!(VitModel::new(ModelConfig { classes: 8, ..micro(MixerKind::Gfn) }, 3));
    let data = synthetic_classification(16, (8, 8), 8, 2);
    let e = ok!(evaluate(&model, &data, 5));
    ensure(e.top5 >= e.top1, || format!("top-5 {} < top-1 {}", e.top5, e.top1))
}

// cli-report

fn config_roundtrip(_: &Ctx) -> std::result::Result<(), String> {
    let mut cfg = RunConfig::default();
    ok!(cfg.set("mixer", "sa"));
    ok!(cfg.set("min_lr", "2e-6"));
    let text = cfg.to_canonical();
    let back = ok!(RunConfig::from_text(&text));
    ensure(back == cfg && back.to_canonical() == text, || "canonical config does not round-trip".into())?;
    ensure(RunConfig::from_text("no_such_key = 1").is_err(), || "unknown key accepted".into())
}

fn cost_formulas(_: &Ctx) -> std::result::Result<(), String> {
    let at = |n: f64| Table1Inputs { n, d: 384.0, blocks: 8.0, k1: 1.0, g1: 1.0, k2: 3.0, g2: 1.0 };
    ensure(at(64.0).params(Table1Row::Sa) == 442_368.0, || "SA parameter row".into())?;
    ensure(at(128.0).flops(Table1Row::Mwa) == 2.0 * at(64.0).flops(Table1Row::Mwa), || "MWA row not linear in N".into())?;
    ensure(at(128.0).flops(Table1Row::Sa) > 2.0 * at(64.0).flops(Table1Row::Sa), || "SA row not superlinear in N".into())
}

fn report_layout(_: &Ctx) -> std::result::Result<(), String> {
    let r = report::render("depth = 1\n", &[], None);
    ensure(r.contains("Model\tParameters (M)\tFlops (G)\tTop-1 (%)\tTop-5 (%)"), || "results header changed".into())?;
    ensure(r.contains(&report::provenance_hash()) && r.contains("depth = 1"), || "report lacks provenance or config".into())
}

macro_rules! inv {
    ($m:expr, $f:ident) => {
        Invariant { module: $m, name: stringify!($f), check: $f }
    };
}

pub fn invariants() -> Vec<Invariant> {
    vec![
        inv!("tensor-core", grouped_conv_equals_slices),
        inv!("tensor-core", softmax_properties),
        inv!("tensor-core", gelu_properties),
        inv!("tensor-core", layer_norm_statistics),
        inv!("tensor-core", op_gradients),
        inv!("transforms", perfect_reconstruction),
        inv!("transforms", energy_preservation),
        inv!("transforms", hand_oracle),
        inv!("transforms", dwt_linearity),
        inv!("transforms", fft_matches_naive),
        inv!("transforms", indivisible_grid_rejected),
        inv!("mixers", attention_oracle),
        inv!("mixers", gfn_reference_filters),
        inv!("mixers", mwa_linear_without_activation),
        inv!("mixers", mwa_any_grid),
        inv!("mixers", mixer_param_counts),
        inv!("mixers", mixer_gradients),
        inv!("backbone", forward_deterministic),
        inv!("backbone", mixers_pluggable),
        inv!("backbone", model_gradients),
        inv!("backbone", mwa_flops_linear),
        inv!("backbone", checkpoint_roundtrip),
        inv!("data-io", cifar_roundtrip),
        inv!("data-io", shuffle_reproducible),
        inv!("data-io", synthetic_deterministic),
        inv!("data-io", normalization_from_train),
        inv!("training", schedule_shape),
        inv!("training", clipping_never_grows),
        inv!("training", adam_reference_step),
        inv!("training", quadratic_descends),
        inv!("training", zero_lr_freezes),
        inv!("training", top5_at_least_top1),
        inv!("cli-report", config_roundtrip),
        inv!("cli-report", cost_formulas),
        inv!("cli-report", report_layout),
    ]
}

/// Runs the selected suites. An unknown module name is a config error.
pub fn run(opts: &VerifyOptions) -> Result<Vec<Outcome>> {
    if let Some(m) = &opts.only {
        if !MODULES.contains(&m.as_str()) {
            return Err(Error::config(format!("unknown module {m:?}, expected one of {}", MODULES.join(", "))));
        }
    }
    let mut bank = FilterPair::haar();
    if opts.fault == Some(Fault::FlipHaarTap) {
        bank.high[1] = -bank.high[1];
    }
    let ctx = Ctx { bank };
    Ok(invariants()
        .into_iter()
        .filter(|inv| opts.only.as_deref().is_none_or(|m| m == inv.module))
        .map(|inv| {
            let t = Instant::now();
            let result = std::panic::catch_unwind(|| (inv.check)(&ctx)).unwrap_or_else(|_| Err("panicked".into()));
            Outcome { module: inv.module, name: inv.name, result, seconds: t.elapsed().as_secs_f64() }
        })
        .collect())
}
