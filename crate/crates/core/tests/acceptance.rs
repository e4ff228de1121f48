//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Runs without the libtest harness so criteria execute sequentially and their
//! wall-clock budgets are measured on an otherwise idle process.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavemix::backbone::{count_params, ModelConfig, Table1Inputs, Table1Row, VitModel};
use wavemix::cost;
use wavemix::data::{self, load_cifar10, synthetic_classification, DatasetSplit};
use wavemix::gradcheck::{self, random_projection, GradCheckOptions, GradCheckReport};
use wavemix::mixers::{GfnParams, Mixer, MixerKind, MwaConfig, MwaParams, SaParams};
use wavemix::training::{fit, FitOptions, TrainConfig};
use wavemix::transforms::{dft2, dwt2, idwt2, DwtConfig};
use wavemix::{ParamStore, Tensor};

type Check = std::result::Result<String, String>;

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: f64) -> std::result::Result<f64, String> {
    let s = start.elapsed().as_secs_f64();
    ensure(s < budget, || format!("took {s:.2}s, budget {budget}s"))?;
    Ok(s)
}

// 1

fn wavelet_roundtrip() -> Check {
    let start = Instant::now();
    let cfg = DwtConfig::default();
    let (mut worst_err, mut worst_energy) = (0.0f64, 0.0f64);
    for seed in 0..100 {
        let x = rand_tensor(&[8, 16, 16], seed);
        let z = dwt2(&x, &cfg).map_err(|e| e.to_string())?;
        let back = idwt2(&z, &cfg).map_err(|e| e.to_string())?;
        worst_err = worst_err.max(back.max_abs_diff(&x));
        worst_energy = worst_energy.max((z.energy() - x.sq_norm()).abs() / x.sq_norm());
    }
    ensure(worst_err <= 1e-10, || format!("reconstruction error {worst_err:.3e}"))?;
    ensure(worst_energy <= 1e-12, || format!("relative energy gap {worst_energy:.3e}"))?;
    let s = within_budget(start, 5.0)?;
    Ok(format!("max error {worst_err:.2e}, max energy gap {worst_energy:.2e}, {s:.2}s"))
}

// 2

fn haar_hand_oracle() -> Check {
    let x = Tensor::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let z = dwt2(&x, &DwtConfig::default()).map_err(|e| e.to_string())?;
    let d = &z.details[0];
    let got = [z.ll.data()[0], d.lh.data()[0], d.hl.data()[0], d.hh.data()[0]];
    let want = [5.0, -2.0, -1.0, 0.0];
    let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err <= 1e-12, || format!("LL, LH, HL, HH = {got:?}"))?;
    Ok(format!("LL, LH, HL, HH = {got:?}"))
}

// 3

fn gradient_checks() -> Check {
    let start = Instant::now();
    let mut results: Vec<(String, GradCheckReport)> = Vec::new();
    let mut push = |name: &str, r: wavemix::Result<GradCheckReport>| -> std::result::Result<(), String> {
        results.push((name.to_string(), r.map_err(|e| format!("{name}: {e}"))?));
        Ok(())
    };

    let (a, b) = (rand_tensor(&[2, 3, 4], 1), rand_tensor(&[2, 3, 4], 2));
    push("add/mul/scale/gelu", gradcheck::check_inputs(&[a, b], |t, v| {
        let s = t.add(v[0], v[1])?;
        let m = t.mul(s, v[1])?;
        let m = t.scale(m, 1.3);
        let g = t.gelu(m);
        random_projection(t, g, 1)
    }))?;
    let (x, bias, pos) = (rand_tensor(&[2, 3, 2, 2], 3), rand_tensor(&[3], 4), rand_tensor(&[3, 2, 2], 5));
    push("bias/broadcast/reshape/narrow/concat", gradcheck::check_inputs(&[x, bias, pos], |t, v| {
        let y = t.add_channel_bias(v[0], v[1])?;
        let y = t.add_broadcast(y, v[2])?;
        let y = t.reshape(y, &[2, 3, 4])?;
        let head = t.narrow0(y, 1, 1)?;
        let y = t.concat0(y, head)?;
        random_projection(t, y, 2)
    }))?;
    let (x, g, b) = (rand_tensor(&[2, 5, 2, 3], 6), rand_tensor(&[5], 7).map(|v| 1.0 + 0.5 * v), rand_tensor(&[5], 8));
    push("layer_norm", gradcheck::check_inputs(&[x, g, b], |t, v| {
        let y = t.layer_norm(v[0], v[1], v[2], 1e-6)?;
        random_projection(t, y, 3)
    }))?;
    for (k, groups) in [(1, 1), (3, 2), (3, 4)] {
        let (x, w) = (rand_tensor(&[2, 4, 4, 4], 10 + k as u64), rand_tensor(&[4, 4 / groups, k, k], 20 + groups as u64));
        push(&format!("conv2d k={k} g={groups}"), gradcheck::check_inputs(&[x, w], |t, v| {
            let y = t.conv2d(v[0], v[1], groups)?;
            random_projection(t, y, 4)
        }))?;
    }
    push("patchify/spatial_mean/softmax", gradcheck::check_inputs(&[rand_tensor(&[2, 3, 4, 8], 30)], |t, v| {
        let p = t.patchify(v[0], 2)?;
        let m = t.spatial_mean(p)?;
        let s = t.softmax(m);
        random_projection(t, s, 5)
    }))?;
    push("haar analysis/synthesis", gradcheck::check_inputs(&[rand_tensor(&[2, 3, 4, 8], 31)], |t, v| {
        let z = t.haar_analysis(v[0])?;
        let g = t.gelu(z);
        let y = t.haar_synthesis(g)?;
        random_projection(t, y, 6)
    }))?;
    push("attention", gradcheck::check_inputs(&[rand_tensor(&[2, 12, 2, 3], 32)], |t, v| {
        let y = t.attention(v[0], 2)?;
        random_projection(t, y, 7)
    }))?;
    let (x, re, im) = (rand_tensor(&[2, 2, 4, 6], 33), rand_tensor(&[2, 4, 4], 34), rand_tensor(&[2, 4, 4], 35));
    push("spectral_filter", gradcheck::check_inputs(&[x, re, im], |t, v| {
        let y = t.spectral_filter(v[0], v[1], v[2])?;
        random_projection(t, y, 8)
    }))?;
    push("cross_entropy/sum", gradcheck::check_inputs(&[rand_tensor(&[3, 5], 36)], |t, v| {
        let l = t.cross_entropy(v[0], &[0, 4, 2])?;
        let s = t.sum(v[0]);
        let s = t.scale(s, 0.1);
        t.add(l, s)
    }))?;

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let x = rand_tensor(&[1, 8, 8, 8], 41);
    for level in [1, 2] {
        let mut store = ParamStore::new();
        let cfg = MwaConfig { g_wave: 2, g_skip1: 2, g_skip3: 4, dwt: DwtConfig::new(level), ..MwaConfig::default() };
        let mwa = MwaParams::new(&mut store, "mwa", 8, cfg, &mut rng).map_err(|e| e.to_string())?;
        push(&format!("MWA level {level}"), gradcheck::check(&store, std::slice::from_ref(&x), |t, s, v| {
            let y = mwa.forward(t, s, v[0])?;
            random_projection(t, y, 9)
        }, GradCheckOptions::default()))?;
    }
    let mut store = ParamStore::new();
    let sa = SaParams::new(&mut store, "sa", 8, 2, &mut rng).map_err(|e| e.to_string())?;
    push("SA", gradcheck::check(&store, std::slice::from_ref(&x), |t, s, v| {
        let y = sa.forward(t, s, v[0])?;
        random_projection(t, y, 10)
    }, GradCheckOptions::default()))?;
    let mut store = ParamStore::new();
    let gfn = GfnParams::new(&mut store, "gfn", 8, (8, 8), &mut rng).map_err(|e| e.to_string())?;
    push("GFN", gradcheck::check(&store, &[x], |t, s, v| {
        let y = gfn.forward(t, s, v[0])?;
        random_projection(t, y, 11)
    }, GradCheckOptions::default()))?;

    let mut worst = 0.0f64;
    for (name, r) in &results {
        ensure(r.passed(), || format!("{name}: {} of {} entries off, first {:?}", r.failures, r.checked, r.first_failure))?;
        worst = worst.max(r.max_rel_err);
    }
    let s = within_budget(start, 60.0)?;
    let entries: usize = results.iter().map(|(_, r)| r.checked).sum();
    Ok(format!("{} checks, {entries} entries, max relative error {worst:.2e}, {s:.1}s", results.len()))
}

// 4

fn naive_attention(x: &Tensor, wqkv: &Tensor, wout: &Tensor, heads: usize) -> Vec<f64> {
    let &[d, h, w] = x.shape() else { unreachable!() };
    let n = h * w;
    let dh = d / heads;
    let project = |row: usize, i: usize| -> f64 { (0..d).map(|c| wqkv.data()[row * d + c] * x.data()[c * n + i]).sum() };
    let mut heads_out = vec![0.0; d * n];
    for hd in 0..heads {
        for i in 0..n {
            let mut scores = vec![0.0; n];
            for (j, s) in scores.iter_mut().enumerate() {
                for e in 0..dh {
                    *s += project(hd * dh + e, i) * project(d + hd * dh + e, j);
                }
                *s /= (dh as f64).sqrt();
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            for e in 0..dh {
                let mut acc = 0.0;
                for (j, s) in scores.iter().enumerate() {
                    acc += (s - max).exp() / denom * project(2 * d + hd * dh + e, j);
                }
                heads_out[(hd * dh + e) * n + i] = acc;
            }
        }
    }
    let mut out = vec![0.0; d * n];
    for o in 0..d {
        for i in 0..n {
            out[o * n + i] = (0..d).map(|c| wout.data()[o * d + c] * heads_out[c * n + i]).sum();
        }
    }
    out
}

fn attention_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for (d, heads) in [(2, 1), (4, 1), (4, 2), (8, 1), (8, 2), (8, 4), (6, 3)] {
        for (h, w) in [(1, 1), (1, 3), (2, 2), (2, 3), (2, 4), (1, 8)] {
            let mut store = ParamStore::new();
            let sa = SaParams::new(&mut store, "sa", d, heads, &mut rng).map_err(|e| e.to_string())?;
            let x = rand_tensor(&[d, h, w], (d * 100 + h * 10 + w) as u64);
            let y = sa.apply(&store, &x).map_err(|e| e.to_string())?;
            let want = naive_attention(&x, store.value(sa.w_qkv), store.value(sa.w_out), heads);
            let err = y.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            ensure(err <= 1e-12, || format!("d={d} heads={heads} N={}: error {err:.3e}", h * w))?;
            worst = worst.max(err);
            cases += 1;
        }
    }
    Ok(format!("{cases} cases with N <= 8, d <= 8, max error {worst:.2e}"))
}

// 5

fn naive_dft2(x: &Tensor) -> Vec<Complex64> {
    let &[c, h, w] = x.shape() else { unreachable!() };
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for a in 0..h {
                    for b in 0..w {
                        let angle = -2.0 * PI * ((u * a) as f64 / h as f64 + (v * b) as f64 / w as f64);
                        acc += Complex64::new(angle.cos(), angle.sin()) * x.data()[(ch * h + a) * w + b];
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

fn spectral_oracle() -> Check {
    let mut worst = 0.0f64;
    for n in [8, 16] {
        let x = rand_tensor(&[3, n, n], 50 + n as u64);
        let fast = dft2(&x).map_err(|e| e.to_string())?;
        let err = fast.data.iter().zip(naive_dft2(&x)).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        ensure(err <= 1e-9, || format!("{n}x{n}: error {err:.3e}"))?;
        worst = worst.max(err);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let gfn = GfnParams::new(&mut store, "gfn", 4, (8, 8), &mut rng).map_err(|e| e.to_string())?;
    store.value_mut(gfn.re).fill(1.0);
    store.value_mut(gfn.im).fill(0.0);
    let x = rand_tensor(&[4, 8, 8], 55);
    let id_err = gfn.apply(&store, &x).map_err(|e| e.to_string())?.max_abs_diff(&x);
    ensure(id_err <= 1e-9, || format!("identity filter error {id_err:.3e}"))?;
    Ok(format!("dft2 max error {worst:.2e}, identity filter error {id_err:.2e}"))
}

// 6

fn counted_multadds(mixer: &Mixer, store: &ParamStore, d: usize, h: usize, w: usize) -> std::result::Result<u64, String> {
    let x = rand_tensor(&[d, h, w], 60);
    let (y, n) = cost::measure(|| mixer.apply(store, &x));
    y.map_err(|e| e.to_string())?;
    Ok(n)
}

fn table1_calculator() -> Check {
    let start = Instant::now();
    let inputs = Table1Inputs::from_config(&ModelConfig::vit_s4(MixerKind::Mwa, 10, (3, 32, 32)));
    let mut rows = Vec::new();
    for row in [Table1Row::Sa, Table1Row::Gfn, Table1Row::Afno, Table1Row::Mwa] {
        let (f, p) = (inputs.flops(row), inputs.params(row));
        ensure(f.is_finite() && f > 0.0 && p.is_finite() && p > 0.0, || format!("{} row not positive", row.label()))?;
        rows.push(format!("{} {p:.0}/{f:.0}", row.label()));
    }
    let sa_params = inputs.params(Table1Row::Sa);
    ensure(sa_params == 442_368.0, || format!("SA params {sa_params}"))?;

    let (d, h, w) = (16, 8, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let mwa = Mixer::Mwa(MwaParams::new(&mut store, "mwa", d, MwaConfig::default(), &mut rng).map_err(|e| e.to_string())?);
    let sa = Mixer::Sa(SaParams::new(&mut store, "sa", d, 4, &mut rng).map_err(|e| e.to_string())?);
    let mwa_ratio = counted_multadds(&mwa, &store, d, h, 2 * w)? as f64 / counted_multadds(&mwa, &store, d, h, w)? as f64;
    let sa_ratio = counted_multadds(&sa, &store, d, h, 2 * w)? as f64 / counted_multadds(&sa, &store, d, h, w)? as f64;
    ensure(mwa_ratio == 2.0, || format!("MWA ratio {mwa_ratio:.6}"))?;
    ensure(sa_ratio > 2.0, || format!("SA ratio {sa_ratio:.6}"))?;
    let s = within_budget(start, 5.0)?;
    Ok(format!("params/flops per layer: {}; MWA ratio {mwa_ratio:.3}, SA ratio {sa_ratio:.3}, {s:.2}s", rows.join(", ")))
}

// 7

fn parameter_bands() -> Check {
    let bands = [(MixerKind::Mwa, 16.0, 17.0), (MixerKind::Gfn, 15.0, 15.0), (MixerKind::Sa, 21.0, 21.0)];
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for (kind, lo, hi) in bands {
        let cfg = ModelConfig::vit_s4(kind, 10, (3, 32, 32));
        let knobs = if kind == MixerKind::Mwa {
            format!(" (g_wave={}, g_skip1={}, g_skip3={})", cfg.mwa.g_wave, cfg.mwa.g_skip1, cfg.mwa.g_skip3)
        } else {
            String::new()
        };
        let report = count_params(&VitModel::new(cfg, 0).map_err(|e| e.to_string())?);
        let total = report.params.total as f64 / 1e6;
        let mixers = report.params.mixer_total() as f64 / 1e6;
        parts.push(format!("{} {total:.2}M total, {mixers:.2}M in mixers{knobs}", kind.label()));
        if !(lo * 0.9..=hi * 1.1).contains(&total) {
            bad.push(format!("{} {total:.2}M outside [{:.1}, {:.1}]", kind.label(), lo * 0.9, hi * 1.1));
        }
    }
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(parts.join("; "))
}

// 8 and 9

enum Source {
    Cifar(DatasetSplit, DatasetSplit),
    Synthetic,
}

fn source() -> Source {
    match data::data_root(None).map(|root| load_cifar10(&root, 0)) {
        Some(Ok((train, test))) => Source::Cifar(train, test),
        _ => Source::Synthetic,
    }
}

/// Returns `(train, test, label)` with train statistics applied to both splits.
fn splits(src: &Source, n_train: usize, n_test: usize) -> std::result::Result<(DatasetSplit, DatasetSplit, &'static str), String> {
    let (train, test, label) = match src {
        Source::Cifar(train, test) => (
            train.subset(n_train, 1).map_err(|e| e.to_string())?,
            test.subset(n_test, 2).map_err(|e| e.to_string())?,
            "CIFAR-10",
        ),
        Source::Synthetic => (
            synthetic_classification(n_train, (32, 32), 10, 1),
            synthetic_classification(n_test, (32, 32), 10, 2),
            "synthetic fallback, no CIFAR-10 root found",
        ),
    };
    let norm = train.compute_normalization().map_err(|e| e.to_string())?;
    Ok((train.with_normalization(norm.clone()), test.with_normalization(norm), label))
}

fn small_model(kind: MixerKind) -> std::result::Result<VitModel, String> {
    let cfg = ModelConfig { depth: 4, dim: 64, patch: 4, mixer: kind, classes: 10, image: (3, 32, 32), heads: 4, ..ModelConfig::default() };
    VitModel::new(cfg, 0).map_err(|e| e.to_string())
}

fn overfit(src: &Source) -> Check {
    let (train, _, label) = splits(src, 256, 0).map_err(|e| e.to_string())?;
    let tc = TrainConfig { epochs: 300, batch_size: 32, ..TrainConfig::default() };
    let opts = FitOptions { stop_at_train_top1: Some(95.0), ..FitOptions::default() };
    let probe = train.subset(32, 3).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    for kind in MixerKind::ALL {
        let start = Instant::now();
        let mut losses = Vec::new();
        let mut reached = Vec::new();
        for _ in 0..2 {
            let mut model = small_model(kind)?;
            let h = fit(&mut model, &train, &probe, &tc, &opts).map_err(|e| format!("{kind}: {e}"))?;
            let top1 = h.last().and_then(|e| e.train_eval).map(|e| e.top1).unwrap_or(0.0);
            reached.push((h.epochs.len(), top1));
            losses.push(h.losses());
        }
        let identical = losses[0].len() == losses[1].len() && losses[0].iter().zip(&losses[1]).all(|(a, b)| a.to_bits() == b.to_bits());
        let (epochs, top1) = reached[0];
        let s = start.elapsed().as_secs_f64() / 2.0;
        parts.push(format!("{} {top1:.1}% after {epochs} epochs ({s:.0}s per run)", kind.label()));
        if top1 < 95.0 {
            bad.push(format!("{} stalled at {top1:.1}%", kind.label()));
        }
        if !identical {
            bad.push(format!("{} loss sequences differ between identical-seed runs", kind.label()));
        }
    }
    ensure(bad.is_empty(), || format!("{}; {}", bad.join("; "), parts.join("; ")))?;
    Ok(format!("{label}: {}; reruns bit-identical", parts.join("; ")))
}

fn generalization(src: &Source) -> Check {
    let (train, test, label) = splits(src, 5000, 1000)?;
    let tc = TrainConfig { epochs: 20, ..TrainConfig::default() };
    let mut parts = Vec::new();
    let mut bad = Vec::new();
    let start = Instant::now();
    for kind in MixerKind::ALL {
        let mut model = small_model(kind)?;
        let h = fit(&mut model, &train, &test, &tc, &FitOptions::default()).map_err(|e| format!("{kind}: {e}"))?;
        let top1 = h.last().and_then(|e| e.test).map(|e| e.top1).unwrap_or(0.0);
        parts.push(format!("{} {top1:.1}%", kind.label()));
        if top1 <= 35.0 {
            bad.push(format!("{} at {top1:.1}%", kind.label()));
        }
    }
    let s = start.elapsed().as_secs_f64();
    ensure(bad.is_empty(), || format!("{label}: test top-1 {}; not above 35%: {}; {s:.0}s", parts.join(", "), bad.join(", ")))?;
    Ok(format!("{label}: test top-1 {}; {s:.0}s", parts.join(", ")))
}

// 10

fn arbitrary_length() -> Check {
    let cfg = ModelConfig { depth: 2, dim: 16, mixer: MixerKind::Mwa, classes: 10, image: (3, 32, 32), heads: 4, ..ModelConfig::default() };
    let mut model = VitModel::new(cfg, 0).map_err(|e| e.to_string())?;
    ensure(model.cfg.grid() == (8, 8), || format!("training grid {:?}", model.cfg.grid()))?;
    let train = synthetic_classification(64, (32, 32), 10, 9);
    let tc = TrainConfig { epochs: 2, warmup_epochs: 1, batch_size: 16, ..TrainConfig::default() };
    fit(&mut model, &train, &train, &tc, &FitOptions::default()).map_err(|e| e.to_string())?;
    let mut checked = Vec::new();
    for (i, blk) in model.blocks.iter().enumerate() {
        let Mixer::Mwa(mwa) = &blk.mixer else { return Err("block mixer is not MWA".into()) };
        for s in [16, 32] {
            let y = mwa.apply(&model.store, &rand_tensor(&[16, s, s], s as u64)).map_err(|e| format!("block {i} at {s}x{s}: {e}"))?;
            ensure(y.shape() == [16, s, s] && y.all_finite(), || format!("block {i} at {s}x{s}: {:?}", y.shape()))?;
        }
        checked.push(i);
    }
    Ok(format!("blocks {checked:?} trained at 8x8 evaluate at 16x16 and 32x32"))
}

struct Criterion<'a> {
    name: &'static str,
    check: Box<dyn Fn() -> Check + 'a>,
    /// Runs on a substitute dataset, so a failure is reported but does not fail the target.
    substitute_data: bool,
}

fn main() -> ExitCode {
    let src = source();
    let fallback = matches!(src, Source::Synthetic);
    let exact = |name, check: Box<dyn Fn() -> Check>| Criterion { name, check, substitute_data: false };
    let criteria = vec![
        exact("wavelet round-trip and energy", Box::new(wavelet_roundtrip)),
        exact("Haar hand oracle", Box::new(haar_hand_oracle)),
        exact("finite-difference gradients", Box::new(gradient_checks)),
        exact("attention oracle", Box::new(attention_oracle)),
        exact("spectral oracle", Box::new(spectral_oracle)),
        exact("complexity calculator", Box::new(table1_calculator)),
        exact("parameter bands", Box::new(parameter_bands)),
        Criterion { name: "overfit smoke training", check: Box::new(|| overfit(&src)), substitute_data: fallback },
        Criterion { name: "generalization smoke training", check: Box::new(|| generalization(&src)), substitute_data: fallback },
        exact("arbitrary grid size", Box::new(arbitrary_length)),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let (mut blocking, mut advisory) = (0, 0);
    for (i, c) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(&c.check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS\t{n}\t{}\t{detail}", c.name),
            Err(why) if c.substitute_data => {
                advisory += 1;
                println!("FAIL\t{n}\t{}\t{why} [substitute data; not blocking]", c.name);
            }
            Err(why) => {
                blocking += 1;
                println!("FAIL\t{n}\t{}\t{why}", c.name);
            }
        }
    }
    if advisory > 0 {
        println!("{advisory} criteria failed on substitute data; set WAVEMIX_DATA_ROOT to a CIFAR-10 directory to run them as specified");
    }
    if blocking == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{blocking} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
