//! Result tables and provenance.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::backbone::checkpoint;
use crate::backbone::CostReport;
use crate::cost::FLOPS_PER_MULTADD;
use crate::transforms::FilterPair;

/// Column headers of the results table.
pub const COLUMNS: [&str; 5] = ["Model", "Parameters (M)", "Flops (G)", "Top-1 (%)", "Top-5 (%)"];

/// SHA-256 over the constants that determine reported numbers: the Haar
/// taps (as raw bits), the FLOP convention and the checkpoint version.
pub fn provenance_hash() -> String {
    let bank = FilterPair::haar();
    let mut h = Sha256::new();
    h.update(b"haar.low");
    bank.low.iter().for_each(|t| h.update(t.to_bits().to_le_bytes()));
    h.update(b"haar.high");
    bank.high.iter().for_each(|t| h.update(t.to_bits().to_le_bytes()));
    h.update(b"flops_per_multadd");
    h.update(FLOPS_PER_MULTADD.to_le_bytes());
    h.update(b"checkpoint");
    h.update(checkpoint::VERSION.to_le_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub params: usize,
    /// Counted FLOPs for one image.
    pub flops: u64,
    pub top1: f64,
    pub top5: f64,
}

impl ResultRow {
    pub fn cells(&self) -> [String; 5] {
        [
            self.model.clone(),
            format!("{:.2}", self.params as f64 / 1e6),
            format!("{:.3}", self.flops as f64 / 1e9),
            format!("{:.2}", self.top1),
            format!("{:.2}", self.top5),
        ]
    }
}

/// Tab-separated table with the standard header.
pub fn results_table(rows: &[ResultRow]) -> String {
    let mut out = COLUMNS.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.cells().join("\t"));
        out.push('\n');
    }
    out
}

/// Full report: provenance, the resolved config, the results table and the
/// measured-vs-closed-form cost comparison.
pub fn render(config_text: &str, rows: &[ResultRow], cost: Option<&CostReport>) -> String {
    let mut out = String::new();
    writeln!(out, "# provenance sha256 {}", provenance_hash()).unwrap();
    writeln!(out, "# config").unwrap();
    for line in config_text.lines() {
        writeln!(out, "#   {line}").unwrap();
    }
    out.push_str(&results_table(rows));
    if let Some(c) = cost {
        writeln!(out, "# cost").unwrap();
        for line in c.to_string().lines() {
            writeln!(out, "#   {line}").unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_exact() {
        let t = results_table(&[]);
        assert_eq!(t, "Model\tParameters (M)\tFlops (G)\tTop-1 (%)\tTop-5 (%)\n");
    }

    #[test]
    fn hash_is_stable_hex() {
        let h = provenance_hash();
        assert_eq!(h.len(), 64);
        assert_eq!(h, provenance_hash());
    }

    #[test]
    fn report_embeds_config() {
        let row = ResultRow { model: "MWA".into(), params: 16_710_000, flops: 2_500_000_000, top1: 50.0, top5: 90.0 };
        let r = render("depth = 2\nmixer = mwa\n", &[row], None);
        assert!(r.contains("#   depth = 2\n#   mixer = mwa\n"));
        assert!(r.contains("MWA\t16.71\t2.500\t50.00\t90.00"));
    }
}
