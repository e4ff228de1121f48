//! ViT-style classifier with a pluggable token mixer.

pub mod analysis;
pub mod checkpoint;
mod vit;

pub use analysis::{count_flops, count_params, CostReport, CostRow, FlopCounts, ParamCounts, Table1Inputs, Table1Row};
pub use vit::{Block, ModelConfig, VitModel};
