use serde::{Deserialize, Serialize};

use crate::model::{AttentionDump, Document};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSumViolation {
    pub layer: usize,
    pub head: usize,
    pub token: usize,
    pub sum: f64,
}

/// Findings of [`validate`]. Row-sum violations are advisory; index errors
/// mean the dump cannot be trusted for this document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub row_sum_violations: Vec<RowSumViolation>,
    pub index_errors: Vec<String>,
    pub ok: bool,
}

impl ValidationReport {
    fn finish(mut self) -> Self {
        self.ok = self.row_sum_violations.is_empty() && self.index_errors.is_empty();
        self
    }
}

/// Checks structural consistency between `dump` and `doc`, weight ranges,
/// and (per row) that present entries sum to 1 within `tolerance`.
pub fn validate(dump: &AttentionDump, doc: &Document, tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    if let Err(e) = dump.check_against(doc) {
        report.index_errors.push(e.to_string());
        return report.finish();
    }
    let n = dump.n_tokens();
    let w = dump.window();
    let width = 2 * w + 1;
    for (idx, (layer, head)) in dump.layer_heads().enumerate() {
        let data = &dump.raw_heads()[idx];
        let blocks = [
            ("band", data.band()),
            ("global row", data.global_rows()),
            ("global column", data.global_cols()),
        ];
        for (name, block) in blocks {
            if let Some(pos) = block.iter().position(|v| !(0.0..=1.0).contains(v)) {
                report.index_errors.push(format!(
                    "({layer}, {head}) {name} weight {} at slot {pos} outside [0, 1]",
                    block[pos]
                ));
            }
        }
        for i in 0..n {
            let row = &data.band()[i * width..(i + 1) * width];
            for (k, &v) in row.iter().enumerate() {
                let key = i as isize - w as isize + k as isize;
                if (key < 0 || key >= n as isize) && v != 0.0 {
                    report.index_errors.push(format!(
                        "({layer}, {head}) token {i}: out-of-bounds band slot {k} holds {v}"
                    ));
                }
            }
        }
        let view = dump.head(layer, head).expect("layer/head from iterator");
        for i in 0..n {
            let sum: f64 = if view.global_slot(i).is_some() {
                (0..n)
                    .filter_map(|j| view.weight(i, j))
                    .map(f64::from)
                    .sum()
            } else {
                let lo = i.saturating_sub(w);
                let hi = (i + w).min(n - 1);
                let local: f64 = (lo..=hi)
                    .filter(|&j| view.global_slot(j).is_none())
                    .filter_map(|j| view.weight(i, j))
                    .map(f64::from)
                    .sum();
                let global: f64 = dump
                    .global_positions()
                    .iter()
                    .filter_map(|&g| view.weight(i, g as usize))
                    .map(f64::from)
                    .sum();
                local + global
            };
            if (sum - 1.0).abs() > tolerance {
                report.row_sum_violations.push(RowSumViolation {
                    layer,
                    head,
                    token: i,
                    sum,
                });
            }
        }
    }
    report.finish()
}
