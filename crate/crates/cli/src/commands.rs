use std::fs;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavemix::backbone::{count_flops, count_params, ModelConfig, VitModel};
use wavemix::config::RunConfig;
use wavemix::data::{self, synthetic_classification, Augment, DatasetSplit};
use wavemix::mixers::{GfnParams, Mixer, MixerKind, MwaParams, SaParams};
use wavemix::report::{self, ResultRow};
use wavemix::training::{fit, FitOptions};
use wavemix::verify::{self, Fault, VerifyOptions};
use wavemix::{cost, Error, ParamStore, Result, Tensor};

use crate::{BenchArgs, RunArgs};

pub const VERIFY_FAILED: u8 = 5;

pub fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut explicit_warmup = args.set.iter().any(|kv| kv.trim_start().starts_with("warmup_epochs"));
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
        explicit_warmup |= text.lines().any(|l| l.split('#').next().unwrap_or("").trim_start().starts_with("warmup_epochs"));
    }
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects key=value, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    let flags: [(&str, Option<String>); 8] = [
        ("mixer", args.mixer.clone()),
        ("dataset", args.dataset.clone()),
        ("subset", args.subset.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("data_root", args.data_root.as_ref().map(|p| p.display().to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("patch", args.patch.map(|v| v.to_string())),
        ("epochs", args.epochs.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    // A short run keeps the default warmup from swallowing every epoch.
    if !explicit_warmup && cfg.train.warmup_epochs >= cfg.train.epochs {
        cfg.train.warmup_epochs = cfg.train.epochs - 1;
        eprintln!("note: warmup_epochs lowered to {} for a {}-epoch run", cfg.train.warmup_epochs, cfg.train.epochs);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(cfg: &RunConfig) -> Result<(DatasetSplit, DatasetSplit)> {
    let seed = cfg.train.seed;
    let (train, test) = match cfg.dataset.cifar() {
        Some(variant) => {
            let root = data::data_root(cfg.data_root.as_deref()).ok_or_else(|| {
                Error::Data(format!("no dataset root; pass --data-root or set {}", data::DATA_ROOT_ENV))
            })?;
            data::load_cifar(&root, variant, seed)?
        }
        None => {
            let grid = (cfg.image_size, cfg.image_size);
            let train = synthetic_classification(cfg.synthetic_train, grid, cfg.synthetic_classes, seed);
            let test = synthetic_classification(cfg.synthetic_test, grid, cfg.synthetic_classes, seed ^ 0x7e57);
            let norm = train.compute_normalization()?;
            (train.with_normalization(norm.clone()), test.with_normalization(norm))
        }
    };
    let train = if cfg.subset > 0 { train.subset(cfg.subset, seed)? } else { train };
    let test = if cfg.test_subset > 0 { test.subset(cfg.test_subset, seed)? } else { test };
    Ok((train, test))
}

pub fn train(args: &RunArgs) -> Result<u8> {
    let cfg = resolve(args)?;
    let (train, test) = load_data(&cfg)?;
    let mcfg = cfg.model_config();
    let mut model = VitModel::new(mcfg.clone(), cfg.train.seed)?;
    fs::create_dir_all(&cfg.out)?;
    let canonical = cfg.to_canonical();
    fs::write(cfg.out.join("config.txt"), &canonical)?;
    let opts = FitOptions {
        metrics_path: Some(cfg.out.join("metrics.tsv")),
        checkpoint_path: Some(cfg.out.join("best.wvmx")),
        augment: cfg.augment.then(Augment::default),
        stop_at_train_top1: None,
        eval_every_epoch: true,
    };
    println!(
        "training {} on {} ({} train / {} test), {} parameters",
        mcfg.mixer.label(),
        cfg.dataset.name(),
        train.len(),
        test.len(),
        model.param_count()
    );
    let history = fit(&mut model, &train, &test, &cfg.train, &opts)?;
    for e in &history.epochs {
        let (t1, t5) = e.test.map_or((f64::NAN, f64::NAN), |t| (t.top1, t.top5));
        println!("epoch {}\tlr {:.3e}\tloss {:.4}\ttop1 {:.2}\ttop5 {:.2}", e.epoch, e.lr, e.train_loss, t1, t5);
    }
    let last = history.last().and_then(|e| e.test).ok_or_else(|| Error::Data("no test evaluation was run".into()))?;
    let cost = count_flops(&model, mcfg.image)?;
    let row = ResultRow {
        model: mcfg.mixer.label().to_string(),
        params: cost.params.total,
        flops: cost.flops.as_ref().map_or(0, |f| f.total_flops()),
        top1: last.top1,
        top5: last.top5,
    };
    fs::write(cfg.out.join("report.tsv"), report::render(&canonical, std::slice::from_ref(&row), Some(&cost)))?;
    print!("{}", report::results_table(&[row]));
    Ok(0)
}

pub fn cost(args: &RunArgs) -> Result<u8> {
    let cfg = resolve(args)?;
    let mcfg = cfg.model_config();
    let model = VitModel::new(mcfg.clone(), cfg.train.seed)?;
    let report = count_flops(&model, mcfg.image)?;
    let params = count_params(&model).params;
    let row = ResultRow {
        model: mcfg.mixer.label().to_string(),
        params: params.total,
        flops: report.flops.as_ref().map_or(0, |f| f.total_flops()),
        top1: f64::NAN,
        top5: f64::NAN,
    };
    print!("{}", report::render(&cfg.to_canonical(), &[row], Some(&report)));
    Ok(0)
}

fn side_of(n: usize) -> Result<usize> {
    let s = (n as f64).sqrt().round() as usize;
    if s * s != n || !s.is_multiple_of(2) {
        return Err(Error::Config(format!("token count {n} is not the square of an even side")));
    }
    Ok(s)
}

fn build_mixer(kind: MixerKind, d: usize, side: usize, store: &mut ParamStore) -> Result<Mixer> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let heads = if d.is_multiple_of(8) { 8 } else { 1 };
    Ok(match kind {
        MixerKind::Mwa => Mixer::Mwa(MwaParams::new(store, "mwa", d, ModelConfig::default().mwa, &mut rng)?),
        MixerKind::Sa => Mixer::Sa(SaParams::new(store, "sa", d, heads, &mut rng)?),
        MixerKind::Gfn => Mixer::Gfn(GfnParams::new(store, "gfn", d, (side, side), &mut rng)?),
    })
}

pub fn bench(args: &BenchArgs) -> Result<u8> {
    let kinds = args.mixers.iter().map(|m| m.parse()).collect::<Result<Vec<MixerKind>>>()?;
    println!("mixer\tN\td\tmultadds\tseconds");
    for kind in kinds {
        for &n in &args.sizes {
            let side = side_of(n)?;
            let mut store = ParamStore::new();
            let mixer = build_mixer(kind, args.d, side, &mut store)?;
            let x = Tensor::from_fn(&[args.d, side, side], |i| ((i * 7919) % 97) as f64 / 97.0 - 0.5);
            let t = Instant::now();
            let (y, multadds) = cost::measure(|| mixer.apply(&store, &x));
            let secs = t.elapsed().as_secs_f64();
            y?;
            println!("{}\t{n}\t{}\t{multadds}\t{secs:.6}", kind.name(), args.d);
        }
    }
    Ok(0)
}

pub fn verify(only: Option<String>, fault: Option<Fault>) -> Result<u8> {
    let outcomes = verify::run(&VerifyOptions { only, fault })?;
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed()).collect();
    println!("{} passed, {} failed", outcomes.len() - failed.len(), failed.len());
    if failed.is_empty() {
        Ok(0)
    } else {
        for o in failed {
            eprintln!("failed: {}/{}", o.module, o.name);
        }
        Ok(VERIFY_FAILED)
    }
}
