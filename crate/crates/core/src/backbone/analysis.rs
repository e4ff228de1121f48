//! Parameter and FLOP accounting.
//!
//! Measured figures come from traversing the parameter store and from the
//! multiply-add counter while running a single-image forward pass. Reference
//! figures evaluate the closed-form complexity rows for SA, GFN, AFNO and
//! MWA as written. One multiply-add counts as two FLOPs; `log N` is base 2.

use std::fmt;

use crate::autodiff::Tape;
use crate::cost::{self, FLOPS_PER_MULTADD};
use crate::error::{Error, Result};
use crate::mixers::{MixerKind, MwaConfig};
use crate::tensor::Tensor;

use super::vit::{ModelConfig, VitModel};

/// Relative gap above which measured and closed-form figures are flagged.
pub const DIVERGENCE_TOL: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table1Row {
    Sa,
    Gfn,
    Afno,
    Mwa,
}

impl Table1Row {
    pub const ALL: [Table1Row; 4] = [Table1Row::Sa, Table1Row::Gfn, Table1Row::Afno, Table1Row::Mwa];

    pub fn label(self) -> &'static str {
        match self {
            Table1Row::Sa => "SA",
            Table1Row::Gfn => "GFN",
            Table1Row::Afno => "AFNO",
            Table1Row::Mwa => "MWA",
        }
    }

    pub fn interpretation(self) -> &'static str {
        match self {
            Table1Row::Sa => "Graph Global Conv",
            Table1Row::Gfn => "Depthwise Global Conv",
            Table1Row::Afno => "Adaptive Global Conv",
            Table1Row::Mwa => "Multi Scale Conv",
        }
    }
}

impl From<MixerKind> for Table1Row {
    fn from(k: MixerKind) -> Self {
        match k {
            MixerKind::Mwa => Table1Row::Mwa,
            MixerKind::Sa => Table1Row::Sa,
            MixerKind::Gfn => Table1Row::Gfn,
        }
    }
}

/// Symbols of the closed-form rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Table1Inputs {
    /// Sequence length `N = hw`.
    pub n: f64,
    pub d: f64,
    /// AFNO block count `K`.
    pub blocks: f64,
    pub k1: f64,
    pub g1: f64,
    pub k2: f64,
    pub g2: f64,
}

impl Table1Inputs {
    /// `k1`/`g1` map to the 1x1 skip branch and `k2`/`g2` to the 3x3 one.
    pub fn from_config(cfg: &ModelConfig) -> Self {
        Table1Inputs {
            n: cfg.tokens() as f64,
            d: cfg.dim as f64,
            blocks: 8.0,
            k1: MwaConfig::K_SKIP1 as f64,
            g1: cfg.mwa.g_skip1 as f64,
            k2: MwaConfig::K_SKIP3 as f64,
            g2: cfg.mwa.g_skip3 as f64,
        }
    }

    pub fn flops(&self, row: Table1Row) -> f64 {
        let Table1Inputs { n, d, blocks, k1, g1, k2, g2 } = *self;
        match row {
            Table1Row::Sa => n * n * d + 3.0 * n * d * d,
            Table1Row::Gfn => n * d + n * d * n.log2(),
            Table1Row::Afno => n * d * d / blocks + n * d * n.log2(),
            Table1Row::Mwa => 1.5 * k1 * n * d * d / g1 + 1.5 * k2 * n * d * d / g2,
        }
    }

    pub fn params(&self, row: Table1Row) -> f64 {
        let Table1Inputs { n, d, blocks, k1, g1, k2, g2 } = *self;
        match row {
            Table1Row::Sa => 3.0 * d * d,
            Table1Row::Gfn => n * d,
            Table1Row::Afno => (1.0 + 4.0 / blocks) * d * d + 4.0 * d,
            Table1Row::Mwa => (k1 / g1 + k2 / g2) * d * d,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub total: usize,
    /// Patch projection and position embedding.
    pub embedding: usize,
    pub mixer_per_layer: Vec<usize>,
    pub mlp: usize,
    pub norms: usize,
    pub head: usize,
}

impl ParamCounts {
    pub fn mixer_total(&self) -> usize {
        self.mixer_per_layer.iter().sum()
    }

    /// Everything outside the mixers.
    pub fn non_mixer(&self) -> usize {
        self.total - self.mixer_total()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FlopCounts {
    /// `(channels, height, width)` of the measured input.
    pub input: (usize, usize, usize),
    pub total_multadds: u64,
    pub mixer_multadds_per_layer: Vec<u64>,
    pub head_multadds: u64,
}

impl FlopCounts {
    pub fn total_flops(&self) -> u64 {
        self.total_multadds * FLOPS_PER_MULTADD
    }

    pub fn mixer_flops(&self, layer: usize) -> u64 {
        self.mixer_multadds_per_layer[layer] * FLOPS_PER_MULTADD
    }

    pub fn flops_without_head(&self) -> u64 {
        (self.total_multadds - self.head_multadds) * FLOPS_PER_MULTADD
    }
}

/// Per-layer mixer figures next to their closed-form counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct CostRow {
    pub row: Table1Row,
    pub params_measured: Option<f64>,
    pub params_table1: f64,
    pub flops_measured: Option<f64>,
    pub flops_table1: f64,
}

fn diverges(measured: Option<f64>, reference: f64) -> Option<bool> {
    measured.map(|m| (m - reference).abs() > DIVERGENCE_TOL * m.abs().max(reference.abs()))
}

impl CostRow {
    pub fn params_diverge(&self) -> Option<bool> {
        diverges(self.params_measured, self.params_table1)
    }

    pub fn flops_diverge(&self) -> Option<bool> {
        diverges(self.flops_measured, self.flops_table1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub mixer: MixerKind,
    pub inputs: Table1Inputs,
    pub params: ParamCounts,
    pub flops: Option<FlopCounts>,
    /// One row per closed form; only the model's own mixer has measured values.
    pub rows: Vec<CostRow>,
}

impl CostReport {
    fn new(model: &VitModel, flops: Option<FlopCounts>) -> Self {
        let inputs = Table1Inputs::from_config(&model.cfg);
        let params = param_counts(model);
        let own = Table1Row::from(model.cfg.mixer);
        let rows = Table1Row::ALL
            .iter()
            .map(|&row| {
                let mine = row == own;
                CostRow {
                    row,
                    params_measured: (mine && !params.mixer_per_layer.is_empty()).then(|| params.mixer_per_layer[0] as f64),
                    params_table1: inputs.params(row),
                    flops_measured: flops
                        .as_ref()
                        .filter(|f| mine && !f.mixer_multadds_per_layer.is_empty())
                        .map(|f| f.mixer_flops(0) as f64),
                    flops_table1: inputs.flops(row),
                }
            })
            .collect();
        CostReport { mixer: model.cfg.mixer, inputs, params, flops, rows }
    }

    pub fn own_row(&self) -> &CostRow {
        let own = Table1Row::from(self.mixer);
        self.rows.iter().find(|r| r.row == own).expect("every mixer has a row")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.0}"))
}

fn fmt_flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "DIVERGES",
        Some(false) => "ok",
        None => "-",
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(f, "mixer: {}", self.mixer.label())?;
        writeln!(f, "parameters: total {} (embedding {}, mixers {}, mlp {}, norms {}, head {})", p.total, p.embedding, p.mixer_total(), p.mlp, p.norms, p.head)?;
        if let Some(fl) = &self.flops {
            let (c, m, n) = fl.input;
            writeln!(f, "flops per {c}x{m}x{n} image: {} ({} mult-adds, head {})", fl.total_flops(), fl.total_multadds, fl.head_multadds)?;
        }
        let i = &self.inputs;
        writeln!(f, "closed forms at N={} d={} K={} k1={} g1={} k2={} g2={} (per layer)", i.n, i.d, i.blocks, i.k1, i.g1, i.k2, i.g2)?;
        writeln!(f, "row\tinterpretation\tparams_measured\tparams_formula\tparams_check\tflops_measured\tflops_formula\tflops_check")?;
        for r in &self.rows {
            writeln!(
                f,
                "{}\t{}\t{}\t{:.0}\t{}\t{}\t{:.0}\t{}",
                r.row.label(),
                r.row.interpretation(),
                fmt_opt(r.params_measured),
                r.params_table1,
                fmt_flag(r.params_diverge()),
                fmt_opt(r.flops_measured),
                r.flops_table1,
                fmt_flag(r.flops_diverge()),
            )?;
        }
        Ok(())
    }
}

fn param_counts(model: &VitModel) -> ParamCounts {
    let s = &model.store;
    let numel = |id| s.value(id).len();
    let pair = |(a, b)| numel(a) + numel(b);
    let mut c = ParamCounts {
        total: s.numel(),
        embedding: pair(model.patch) + numel(model.pos_embed),
        head: pair(model.head),
        norms: pair(model.norm),
        ..ParamCounts::default()
    };
    for (i, blk) in model.blocks.iter().enumerate() {
        c.mixer_per_layer.push(s.numel_with_prefix(&VitModel::mixer_prefix(i)));
        c.mlp += pair(blk.fc1) + pair(blk.fc2);
        c.norms += pair(blk.norm1) + pair(blk.norm2);
    }
    c
}

/// As-built parameter counts plus closed-form reference rows.
pub fn count_params(model: &VitModel) -> CostReport {
    CostReport::new(model, None)
}

/// Runs one image of shape `input` through the model under the multiply-add
/// counter. The input must match the grid the model was built for.
pub fn count_flops(model: &VitModel, input: (usize, usize, usize)) -> Result<CostReport> {
    if input != model.cfg.image {
        return Err(Error::config(format!(
            "model was built for {:?} inputs, asked to count {:?}; rebuild it at that size",
            model.cfg.image, input
        )));
    }
    let (c, m, n) = input;
    let mut tape = Tape::inference();
    let x = tape.constant(Tensor::zeros(&[1, c, m, n]));
    let (res, total) = cost::measure(|| -> Result<_> {
        let mut h = model.patch_embed(&mut tape, x)?;
        let mut per_layer = Vec::with_capacity(model.blocks.len());
        for blk in &model.blocks {
            let (y, mc) = model.block(&mut tape, blk, h)?;
            per_layer.push(mc);
            h = y;
        }
        let (logits, head) = cost::measure(|| model.classify(&mut tape, h));
        logits?;
        Ok((per_layer, head))
    });
    let (mixer_multadds_per_layer, head_multadds) = res?;
    let flops = FlopCounts { input, total_multadds: total, mixer_multadds_per_layer, head_multadds };
    Ok(CostReport::new(model, Some(flops)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(n: f64, d: f64) -> Table1Inputs {
        Table1Inputs { n, d, blocks: 8.0, k1: 1.0, g1: 1.0, k2: 3.0, g2: 1.0 }
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(inputs(64.0, 384.0).params(Table1Row::Sa), 442_368.0);
        assert_eq!(inputs(64.0, 384.0).params(Table1Row::Gfn), 24_576.0);
        assert_eq!(inputs(64.0, 8.0).flops(Table1Row::Mwa), 24_576.0);
    }

    #[test]
    fn mwa_param_traversal_matches_closed_count() {
        let cfg = ModelConfig { depth: 2, dim: 16, classes: 5, image: (3, 16, 16), ..ModelConfig::default() };
        let model = VitModel::new(cfg.clone(), 0).unwrap();
        let c = count_params(&model).params;
        assert_eq!(c.mixer_per_layer, vec![cfg.mwa.param_count(16); 2]);
        assert_eq!(c.total, c.embedding + c.mixer_total() + c.mlp + c.norms + c.head);
        // patch 48->16 with bias, pos 16x4x4, head 16->5 with bias
        assert_eq!(c.embedding, 48 * 16 + 16 + 16 * 16);
        assert_eq!(c.head, 16 * 5 + 5);
    }

    #[test]
    fn flop_count_rejects_other_sizes() {
        let cfg = ModelConfig { depth: 1, dim: 8, classes: 3, image: (3, 8, 8), ..ModelConfig::default() };
        let model = VitModel::new(cfg, 0).unwrap();
        assert!(count_flops(&model, (3, 16, 16)).is_err());
        let r = count_flops(&model, (3, 8, 8)).unwrap();
        let f = r.flops.unwrap();
        assert_eq!(f.head_multadds, 8 * 3);
        assert!(f.total_multadds > f.mixer_multadds_per_layer[0]);
    }
}
