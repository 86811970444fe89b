//! Summary tables over evaluation reports: per-dataset best-k rows plus a
//! Total block summing each method's best scores across datasets.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use caembed_core::eval::EvalReport;

#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub block: String,
    pub method: String,
    pub p: f64,
    /// Best k for dataset blocks; `None` in the Total block and for
    /// matrix-row scores.
    pub k: Option<usize>,
    pub rho: f64,
}

/// Per-dataset best-(k) rows plus a Total block. Within a block, rows are
/// ordered by method name, then p.
pub fn emit_summary(reports: &[EvalReport]) -> Vec<SummaryRow> {
    // (method label incl. row/svd marker, p) -> dataset -> best (rho, k)
    let mut best: BTreeMap<(String, String), BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in reports {
        let svd = r.k > 0;
        let method = if svd {
            r.method.clone()
        } else {
            format!("{} rows", r.method)
        };
        let p_key = if svd { format!("{}", r.p) } else { "0".to_string() };
        let per_dataset = best.entry((method, p_key)).or_default();
        let slot = per_dataset.entry(r.dataset.clone()).or_insert((f64::NEG_INFINITY, 0));
        // Maximum rho over the grid; ties keep the smaller k.
        if r.rho > slot.0 || (r.rho == slot.0 && r.k < slot.1) {
            *slot = (r.rho, r.k);
        }
    }
    let mut datasets: Vec<String> = reports.iter().map(|r| r.dataset.clone()).collect();
    datasets.sort();
    datasets.dedup();

    let mut rows = Vec::new();
    for dataset in &datasets {
        for ((method, p), per_dataset) in &best {
            if let Some((rho, k)) = per_dataset.get(dataset) {
                rows.push(SummaryRow {
                    block: dataset.clone(),
                    method: method.clone(),
                    p: p.parse().unwrap_or(0.0),
                    k: (*k > 0).then_some(*k),
                    rho: *rho,
                });
            }
        }
    }
    for ((method, p), per_dataset) in &best {
        let total: f64 = per_dataset.values().map(|(rho, _)| rho).sum();
        rows.push(SummaryRow {
            block: "Total".into(),
            method: method.clone(),
            p: p.parse().unwrap_or(0.0),
            k: None,
            rho: total,
        });
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "block\tmethod\tp\tk\trho")?;
    for r in rows {
        let k = r.k.map_or("-".to_string(), |k| k.to_string());
        writeln!(w, "{}\t{}\t{}\t{}\t{:.6}", r.block, r.method, r.p, k, r.rho)?;
    }
    w.flush()?;
    Ok(())
}
