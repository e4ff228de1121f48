use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Tape, Var};
use crate::cost;
use crate::error::{Error, Result};
use crate::mixers::{fan_in_normal, GfnParams, Mixer, MixerKind, MwaConfig, MwaParams, SaParams};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

const POS_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub depth: usize,
    /// Hidden size `d`.
    pub dim: usize,
    pub patch: usize,
    pub mixer: MixerKind,
    pub mlp_ratio: usize,
    pub classes: usize,
    /// `(channels, height, width)` of input images.
    pub image: (usize, usize, usize),
    pub mwa: MwaConfig,
    pub heads: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    /// ViT-S/4 on 32x32 RGB: 12 layers, d = 384, 4x4 patches.
    fn default() -> Self {
        ModelConfig {
            depth: 12,
            dim: 384,
            patch: 4,
            mixer: MixerKind::Mwa,
            mlp_ratio: 4,
            classes: 10,
            image: (3, 32, 32),
            mwa: MwaConfig::default(),
            heads: 8,
            ln_eps: 1e-6,
        }
    }
}

impl ModelConfig {
    /// ViT-S/4 with the group settings used to land each mixer in its
    /// published parameter band (MWA: 16/4/16 groups on wave/1x1/3x3).
    pub fn vit_s4(mixer: MixerKind, classes: usize, image: (usize, usize, usize)) -> Self {
        let mwa = MwaConfig { g_wave: 16, g_skip1: 4, g_skip3: 16, ..MwaConfig::default() };
        ModelConfig { mixer, classes, image, mwa, ..ModelConfig::default() }
    }

    /// Token grid `(h, w) = (m/p, n/p)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.image.1 / self.patch, self.image.2 / self.patch)
    }

    pub fn tokens(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn validate(&self) -> Result<()> {
        let (c, m, n) = self.image;
        if c == 0 || m == 0 || n == 0 {
            return Err(Error::config(format!("image dims must be positive, got {c}x{m}x{n}")));
        }
        if self.patch == 0 || m % self.patch != 0 || n % self.patch != 0 {
            return Err(Error::config(format!("image {m}x{n} is not divisible by patch size {}", self.patch)));
        }
        if self.dim == 0 || self.classes == 0 || self.mlp_ratio == 0 {
            return Err(Error::config("dim, classes and mlp_ratio must be positive"));
        }
        match self.mixer {
            MixerKind::Mwa => {
                self.mwa.validate(self.dim)?;
                let (h, w) = self.grid();
                self.mwa.dwt.check_grid(h, w).map_err(|e| Error::config(e.to_string()))?;
            }
            MixerKind::Sa => {
                if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
                    return Err(Error::config(format!("hidden size d={} not divisible by heads={}", self.dim, self.heads)));
                }
            }
            MixerKind::Gfn => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub norm1: (ParamId, ParamId),
    pub mixer: Mixer,
    pub norm2: (ParamId, ParamId),
    pub fc1: (ParamId, ParamId),
    pub fc2: (ParamId, ParamId),
}

#[derive(Debug, Clone)]
pub struct VitModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    pub patch: (ParamId, ParamId),
    pub pos_embed: ParamId,
    pub blocks: Vec<Block>,
    pub norm: (ParamId, ParamId),
    pub head: (ParamId, ParamId),
}

fn norm_params(store: &mut ParamStore, prefix: &str, d: usize) -> (ParamId, ParamId) {
    let g = store.add(format!("{prefix}.gain"), Tensor::full(&[d], 1.0), false);
    let b = store.add(format!("{prefix}.bias"), Tensor::zeros(&[d]), false);
    (g, b)
}

/// 1x1 projection `c_in -> c_out` with bias.
fn linear_params(store: &mut ParamStore, prefix: &str, c_in: usize, c_out: usize, rng: &mut ChaCha8Rng) -> (ParamId, ParamId) {
    let w = store.add(format!("{prefix}.weight"), fan_in_normal(&[c_out, c_in, 1, 1], c_in, rng), true);
    let b = store.add(format!("{prefix}.bias"), Tensor::zeros(&[c_out]), false);
    (w, b)
}

impl VitModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.dim;
        let (h, w) = cfg.grid();
        let patch_in = cfg.image.0 * cfg.patch * cfg.patch;

        let patch = linear_params(&mut store, "patch", patch_in, d, &mut rng);
        let normal = Normal::new(0.0, POS_INIT_STD).expect("positive std");
        let pos = Tensor::from_fn(&[d, h, w], |_| normal.sample(&mut rng));
        let pos_embed = store.add("pos_embed", pos, false);

        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            let prefix = format!("blocks.{i}");
            let norm1 = norm_params(&mut store, &format!("{prefix}.norm1"), d);
            let mp = format!("{prefix}.mixer");
            let mixer = match cfg.mixer {
                MixerKind::Mwa => Mixer::Mwa(MwaParams::new(&mut store, &mp, d, cfg.mwa, &mut rng)?),
                MixerKind::Sa => Mixer::Sa(SaParams::new(&mut store, &mp, d, cfg.heads, &mut rng)?),
                MixerKind::Gfn => Mixer::Gfn(GfnParams::new(&mut store, &mp, d, (h, w), &mut rng)?),
            };
            let norm2 = norm_params(&mut store, &format!("{prefix}.norm2"), d);
            let hidden = cfg.mlp_ratio * d;
            let fc1 = linear_params(&mut store, &format!("{prefix}.mlp.fc1"), d, hidden, &mut rng);
            let fc2 = linear_params(&mut store, &format!("{prefix}.mlp.fc2"), hidden, d, &mut rng);
            blocks.push(Block { norm1, mixer, norm2, fc1, fc2 });
        }
        let norm = norm_params(&mut store, "norm", d);
        let head = linear_params(&mut store, "head", d, cfg.classes, &mut rng);
        Ok(VitModel { cfg, store, patch, pos_embed, blocks, norm, head })
    }

    fn linear(&self, tape: &mut Tape, x: Var, (w, b): (ParamId, ParamId)) -> Result<Var> {
        let wv = tape.param(&self.store, w);
        let bv = tape.param(&self.store, b);
        let y = tape.conv2d(x, wv, 1)?;
        tape.add_channel_bias(y, bv)
    }

    fn norm(&self, tape: &mut Tape, x: Var, (g, b): (ParamId, ParamId)) -> Result<Var> {
        let gv = tape.param(&self.store, g);
        let bv = tape.param(&self.store, b);
        tape.layer_norm(x, gv, bv, self.cfg.ln_eps)
    }

    /// Patch embedding plus position embedding: `[B, 3, m, n] -> [B, d, h, w]`.
    pub fn patch_embed(&self, tape: &mut Tape, images: Var) -> Result<Var> {
        let s = tape.shape(images).to_vec();
        let (c, m, n) = self.cfg.image;
        if s.len() != 4 || s[1..] != [c, m, n] {
            return Err(Error::config(format!("model expects [B, {c}, {m}, {n}] images, got {s:?}")));
        }
        let patches = tape.patchify(images, self.cfg.patch)?;
        let tokens = self.linear(tape, patches, self.patch)?;
        let pos = tape.param(&self.store, self.pos_embed);
        tape.add_broadcast(tokens, pos)
    }

    /// One pre-norm block. Also returns the multiply-adds spent in the mixer.
    pub fn block(&self, tape: &mut Tape, blk: &Block, x: Var) -> Result<(Var, u64)> {
        let n1 = self.norm(tape, x, blk.norm1)?;
        let (mixed, mixer_cost) = cost::measure(|| blk.mixer.forward(tape, &self.store, n1));
        let x = tape.add(x, mixed?)?;
        let n2 = self.norm(tape, x, blk.norm2)?;
        let hdn = self.linear(tape, n2, blk.fc1)?;
        let hdn = tape.gelu(hdn);
        let out = self.linear(tape, hdn, blk.fc2)?;
        Ok((tape.add(x, out)?, mixer_cost))
    }

    /// Runs the transformer blocks on a token grid.
    pub fn encode(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for blk in &self.blocks {
            x = self.block(tape, blk, x)?.0;
        }
        Ok(x)
    }

    /// Final norm, global average pool and linear head: `[B, d, h, w] -> [B, classes]`.
    pub fn classify(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let x = self.norm(tape, x, self.norm)?;
        let pooled = tape.spatial_mean(x)?;
        let b = tape.shape(pooled)[0];
        let pooled = tape.reshape(pooled, &[b, self.cfg.dim, 1, 1])?;
        let logits = self.linear(tape, pooled, self.head)?;
        tape.reshape(logits, &[b, self.cfg.classes])
    }

    /// `[B, 3, m, n]` images to `[B, classes]` logits.
    pub fn forward(&self, tape: &mut Tape, images: Var) -> Result<Var> {
        let tokens = self.patch_embed(tape, images)?;
        let enc = self.encode(tape, tokens)?;
        self.classify(tape, enc)
    }

    /// Inference on a batch tensor.
    pub fn logits(&self, images: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let x = tape.constant(images.clone());
        let y = self.forward(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    pub fn param_count(&self) -> usize {
        self.store.numel()
    }

    pub fn mixer_prefix(layer: usize) -> String {
        format!("blocks.{layer}.mixer.")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn micro(mixer: MixerKind) -> ModelConfig {
        ModelConfig { depth: 1, dim: 8, patch: 4, mixer, classes: 3, image: (3, 8, 8), heads: 2, ..ModelConfig::default() }
    }

    #[test]
    fn patch_embed_shapes() {
        for (img, grid) in [((3, 32, 32), (8, 8)), ((3, 64, 64), (16, 16))] {
            let cfg = ModelConfig { depth: 0, image: img, ..ModelConfig::default() };
            assert_eq!(cfg.grid(), grid);
            let model = VitModel::new(cfg, 0).unwrap();
            let mut tape = Tape::inference();
            let x = tape.constant(Tensor::zeros(&[1, 3, img.1, img.2]));
            let t = model.patch_embed(&mut tape, x).unwrap();
            assert_eq!(tape.shape(t), &[1, 384, grid.0, grid.1]);
        }
    }

    #[test]
    fn zero_everything_gives_zero_tokens() {
        let mut model = VitModel::new(micro(MixerKind::Mwa), 1).unwrap();
        for p in model.store.iter_mut() {
            p.tensor.value.fill(0.0);
        }
        let mut tape = Tape::inference();
        let x = tape.constant(Tensor::zeros(&[2, 3, 8, 8]));
        let t = model.patch_embed(&mut tape, x).unwrap();
        assert_eq!(tape.value(t).max_abs(), 0.0);
    }

    #[test]
    fn indivisible_patch_is_config_error() {
        let cfg = ModelConfig { patch: 5, ..ModelConfig::default() };
        assert!(matches!(VitModel::new(cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn mwa_grid_must_split() {
        let mut cfg = micro(MixerKind::Mwa);
        cfg.image = (3, 12, 12); // 3x3 grid
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.mixer = MixerKind::Gfn;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn forward_is_deterministic() {
        for kind in MixerKind::ALL {
            let model = VitModel::new(micro(kind), 7).unwrap();
            let img = Tensor::from_fn(&[2, 3, 8, 8], |i| ((i * 31) % 17) as f64 / 17.0);
            let a = model.logits(&img).unwrap();
            let b = model.logits(&img).unwrap();
            assert_eq!(a.shape(), &[2, 3]);
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
