//! Extreme-value and contribution analysis: Tukey fences over the support
//! values of a matrix, per-cell inertia shares, and per-dimension row/column
//! contributions of a factorization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec;
use crate::factorize::Factorization;
use crate::sparse::fmt_g17;
use crate::transform::TransformedMatrix;

/// How sample quartiles are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuartileRule {
    /// Linear interpolation at positions `0.25 (n-1)` and `0.75 (n-1)`.
    #[default]
    Interpolated,
    /// Value at rank `ceil(q n)` (1-based).
    NearestRank,
}

impl QuartileRule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "interpolated" => Ok(Self::Interpolated),
            "nearest-rank" => Ok(Self::NearestRank),
            _ => Err(Error::InvalidParameter(format!(
                "unknown quartile rule {s:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Interpolated => "interpolated",
            Self::NearestRank => "nearest-rank",
        }
    }
}

/// First and third sample quartiles of an ascending-sorted slice.
pub fn quartiles(sorted: &[f64], rule: QuartileRule) -> (f64, f64) {
    debug_assert!(!sorted.is_empty());
    let at = |q: f64| -> f64 {
        match rule {
            QuartileRule::Interpolated => {
                let pos = q * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                if lo + 1 < sorted.len() {
                    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
                } else {
                    sorted[lo]
                }
            }
            QuartileRule::NearestRank => {
                let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
                sorted[rank.min(sorted.len()) - 1]
            }
        }
    };
    (at(0.25), at(0.75))
}

/// Tukey-fence report over the masked (support) values of a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FenceReport {
    pub matrix: String,
    pub q1: f64,
    pub q3: f64,
    /// `q1 - 1.5 (q3 - q1)`.
    pub f1: f64,
    /// `q3 + 1.5 (q3 - q1)`.
    pub f3: f64,
    pub count_lt_f1: usize,
    pub count_gt_f3: usize,
    pub total: usize,
    /// The most extreme `(row, col, value)` triples in original index space,
    /// ordered by distance beyond the nearer fence, descending.
    pub top_entries: Vec<(u32, u32, f64)>,
}

impl FenceReport {
    pub const TSV_HEADER: &'static str = "matrix\tq1\tq3\tf1\tf3\tcount_lt_f1\tcount_gt_f3\ttotal";

    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.matrix,
            fmt_g17(self.q1),
            fmt_g17(self.q3),
            fmt_g17(self.f1),
            fmt_g17(self.f3),
            self.count_lt_f1,
            self.count_gt_f3,
            self.total
        )
    }
}

/// Computes quartiles, fences, and extreme-value counts over the support
/// values of `m`. The support mask is the nonzero pattern of the source
/// counts; cells outside it are ignored entirely.
pub fn tukey_fences(
    m: &TransformedMatrix,
    rule: QuartileRule,
    top_m: usize,
) -> Result<FenceReport> {
    if m.support_nnz() == 0 {
        return Err(Error::InsufficientData(
            "support mask is empty; no values to fence".into(),
        ));
    }
    let mut values: Vec<f64> = m.support().values().to_vec();
    exec::sort_f64(&mut values);
    let (q1, q3) = quartiles(&values, rule);
    let iqr = q3 - q1;
    let f1 = q1 - 1.5 * iqr;
    let f3 = q3 + 1.5 * iqr;
    let count_lt_f1 = values.partition_point(|&v| v < f1);
    let count_gt_f3 = values.len() - values.partition_point(|&v| v <= f3);
    let mut extremes: Vec<(f64, u32, u32, f64)> = m
        .support()
        .iter()
        .filter_map(|(i, j, v)| {
            if v < f1 {
                Some((f1 - v, i, j, v))
            } else if v > f3 {
                Some((v - f3, i, j, v))
            } else {
                None
            }
        })
        .collect();
    extremes.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let top_entries = extremes
        .into_iter()
        .take(top_m)
        .map(|(_, i, j, v)| (m.row_map()[i as usize], m.col_map()[j as usize], v))
        .collect();
    Ok(FenceReport {
        matrix: m.spec().label(),
        q1,
        q3,
        f1,
        f3,
        count_lt_f1,
        count_gt_f3,
        total: count_lt_f1 + count_gt_f3,
        top_entries,
    })
}

/// Per-cell shares of the total inertia (squared Frobenius mass).
#[derive(Debug, Clone, PartialEq)]
pub struct CellContributions {
    pub total_inertia: f64,
    /// `(row, col, share)` for support cells, original index space,
    /// row-major order.
    pub shares: Vec<(u32, u32, f64)>,
    /// Combined share of all off-support cells (zero for uncentered kinds).
    pub off_support_share: f64,
}

/// `share(i, j) = value(i, j)^2 / sum over all cells of value^2`.
pub fn cell_inertia_contribution(m: &TransformedMatrix) -> Result<CellContributions> {
    let total = m.frobenius_sq();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput(
            "matrix has zero total inertia".into(),
        ));
    }
    let mut on_support = 0.0;
    let shares: Vec<(u32, u32, f64)> = m
        .support()
        .iter()
        .map(|(i, j, v)| {
            on_support += v * v;
            (
                m.row_map()[i as usize],
                m.col_map()[j as usize],
                v * v / total,
            )
        })
        .collect();
    Ok(CellContributions {
        total_inertia: total,
        shares,
        off_support_share: (total - on_support) / total,
    })
}

/// `u_ik^2` (or `v_jk^2`) for the requested rows over dimensions `1..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionContributions {
    pub rows: Vec<usize>,
    pub dims: usize,
    /// `shares[r][k]` for requested row `r` and dimension `k`.
    pub shares: Vec<Vec<f64>>,
}

impl DimensionContributions {
    /// Writes `row<TAB>dimension<TAB>share` lines; `labels` maps a row index
    /// to its display name (term), falling back to the index.
    pub fn write_tsv(&self, path: &Path, labels: Option<&[String]>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "row_term\tdimension\tshare")?;
        for (slot, &row) in self.rows.iter().enumerate() {
            let name = labels
                .and_then(|l| l.get(row))
                .cloned()
                .unwrap_or_else(|| row.to_string());
            for k in 0..self.dims {
                writeln!(w, "{name}\t{}\t{}", k + 1, fmt_g17(self.shares[slot][k]))?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Contribution of each requested row to each of the leading dimensions.
pub fn dimension_contributions(
    f: &Factorization,
    rows: &[usize],
    k_max: usize,
) -> Result<DimensionContributions> {
    if k_max > f.k_max() {
        return Err(Error::InvalidParameter(format!(
            "k_max = {k_max} exceeds retained components {}",
            f.k_max()
        )));
    }
    let n = f.u().nrows();
    for &r in rows {
        if r >= n {
            return Err(Error::IndexOutOfRange { index: r, size: n });
        }
    }
    let shares = rows
        .iter()
        .map(|&r| {
            (0..k_max)
                .map(|k| {
                    let u = f.u().get(r, k);
                    u * u
                })
                .collect()
        })
        .collect();
    Ok(DimensionContributions {
        rows: rows.to_vec(),
        dims: k_max,
        shares,
    })
}

/// Distinct row indices (original space) of the `m` most extreme entries,
/// ordered by extremeness.
pub fn top_extreme_rows(fr: &FenceReport, m: usize) -> Vec<u32> {
    let mut seen = std::collections::HashSet::new();
    let mut rows = Vec::new();
    for &(i, _, _) in fr.top_entries.iter().take(m) {
        if seen.insert(i) {
            rows.push(i);
        }
    }
    rows
}

/// Writes one fence report line per matrix, with the shared header.
pub fn write_fence_reports(path: &Path, reports: &[FenceReport]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", FenceReport::TSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.tsv_line())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::{
        pmi_matrix, ppmi_matrix, proportions, ttest_matrix, ProportionTable, TransformKind,
        TransformSpec, TransformedMatrix,
    };
    use crate::cooccur::CooccurrenceMatrix;
    use crate::factorize::truncated_svd;

    #[test]
    fn fences_fixture() {
        let m = TransformedMatrix::from_dense_full(
            &[vec![1.0, 2.0, 3.0, 4.0, 100.0]],
            TransformSpec::new(TransformKind::Pmi),
        );
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 10).unwrap();
        assert_eq!(fr.q1, 2.0);
        assert_eq!(fr.q3, 4.0);
        assert_eq!(fr.f1, -1.0);
        assert_eq!(fr.f3, 7.0);
        assert_eq!(fr.count_lt_f1, 0);
        assert_eq!(fr.count_gt_f3, 1);
        assert_eq!(fr.total, 1);
        assert_eq!(fr.top_entries, vec![(0, 4, 100.0)]);
    }

    #[test]
    fn fences_constant_input_has_no_extremes() {
        let m = TransformedMatrix::from_dense_full(
            &[vec![5.0; 7]],
            TransformSpec::new(TransformKind::Pmi),
        );
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 10).unwrap();
        assert_eq!(fr.total, 0);
        assert_eq!(fr.q1, fr.q3);
        assert!(fr.top_entries.is_empty());
    }

    #[test]
    fn fences_nearest_rank_rule() {
        let m = TransformedMatrix::from_dense_full(
            &[vec![1.0, 2.0, 3.0, 4.0, 100.0]],
            TransformSpec::new(TransformKind::Pmi),
        );
        let fr = tukey_fences(&m, QuartileRule::NearestRank, 10).unwrap();
        // ceil(0.25*5) = 2nd value, ceil(0.75*5) = 4th value.
        assert_eq!(fr.q1, 2.0);
        assert_eq!(fr.q3, 4.0);
    }

    #[test]
    fn fences_respect_support_mask() {
        // Off-support zeros of PMI must not enter the quartiles.
        let t = ProportionTable::from_dense(&[vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let m = pmi_matrix(&t).unwrap();
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 10).unwrap();
        assert_eq!(fr.q1, 2f64.ln());
        assert_eq!(fr.q3, 2f64.ln());
        assert_eq!(fr.total, 0);
    }

    #[test]
    fn fences_mask_includes_explicit_zeros() {
        // PPMI keeps clipped cells on the mask.
        let t = ProportionTable::from_dense(&[vec![1.0, 3.0], vec![3.0, 1.0]]).unwrap();
        let m = ppmi_matrix(&t).unwrap();
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 10).unwrap();
        // Four masked values: {0, log 1.5, log 1.5, 0}.
        assert_eq!(fr.q1, 0.0);
        assert!(fr.q3 > 0.0);
    }

    #[test]
    fn cell_shares_sum_to_one_with_off_support() {
        let x = CooccurrenceMatrix::from_dense(&[
            vec![5.0, 1.0, 0.0],
            vec![2.0, 0.0, 3.0],
            vec![0.0, 4.0, 1.0],
        ])
        .unwrap();
        let m = ttest_matrix(&proportions(&x).unwrap()).unwrap();
        let c = cell_inertia_contribution(&m).unwrap();
        let sum: f64 = c.shares.iter().map(|(_, _, s)| s).sum::<f64>() + c.off_support_share;
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_residual_shares() {
        let t = ProportionTable::from_dense(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let m = ttest_matrix(&t).unwrap();
        let c = cell_inertia_contribution(&m).unwrap();
        for (_, _, s) in &c.shares {
            assert!((s - 0.25).abs() < 1e-12);
        }
        assert!(c.off_support_share.abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_contribution_is_degenerate() {
        let m = TransformedMatrix::from_dense_full(
            &[vec![0.0, 0.0]],
            TransformSpec::new(TransformKind::Pmi),
        );
        assert!(matches!(
            cell_inertia_contribution(&m),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn dimension_contributions_sum_to_one_per_dim() {
        let t = ProportionTable::from_dense(&[
            vec![5.0, 1.0, 2.0],
            vec![2.0, 6.0, 3.0],
            vec![1.0, 4.0, 1.0],
        ])
        .unwrap();
        let f = truncated_svd(&ttest_matrix(&t).unwrap(), 2, 7).unwrap();
        let d = dimension_contributions(&f, &[0, 1, 2], 2).unwrap();
        for k in 0..2 {
            let sum: f64 = d.shares.iter().map(|row| row[k]).sum();
            assert!((sum - 1.0).abs() < 1e-8, "dimension {k} sums to {sum}");
        }
    }

    #[test]
    fn rank_one_residual_splits_rows_evenly() {
        let t = ProportionTable::from_dense(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let f = truncated_svd(&ttest_matrix(&t).unwrap(), 1, 7).unwrap();
        let d = dimension_contributions(&f, &[0, 1], 1).unwrap();
        assert!((d.shares[0][0] - 0.5).abs() < 1e-10);
        assert!((d.shares[1][0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn dimension_contributions_validates_rows() {
        let t = ProportionTable::from_dense(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let f = truncated_svd(&ttest_matrix(&t).unwrap(), 1, 7).unwrap();
        assert!(matches!(
            dimension_contributions(&f, &[5], 1),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn planted_outlier_row_is_found() {
        let mut rows = vec![vec![1.0; 8]; 8];
        rows[3][5] = 50.0;
        let m = TransformedMatrix::from_dense_full(&rows, TransformSpec::new(TransformKind::Pmi));
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 10).unwrap();
        assert_eq!(top_extreme_rows(&fr, 10), vec![3]);
    }

    #[test]
    fn top_rows_larger_m_returns_all_extreme_rows() {
        let mut rows = vec![vec![1.0; 8]; 8];
        rows[2][1] = 60.0;
        rows[6][0] = 90.0;
        let m = TransformedMatrix::from_dense_full(&rows, TransformSpec::new(TransformKind::Pmi));
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 100).unwrap();
        assert_eq!(top_extreme_rows(&fr, 100), vec![6, 2]);
    }

    #[test]
    fn symmetric_matrix_row_and_column_extremes_coincide() {
        let x = CooccurrenceMatrix::from_dense(&[
            vec![9.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ])
        .unwrap();
        let m = ttest_matrix(&proportions(&x).unwrap()).unwrap();
        let fr = tukey_fences(&m, QuartileRule::Interpolated, 100).unwrap();
        let rows: std::collections::HashSet<u32> =
            fr.top_entries.iter().map(|&(i, _, _)| i).collect();
        let cols: std::collections::HashSet<u32> =
            fr.top_entries.iter().map(|&(_, j, _)| j).collect();
        assert_eq!(rows, cols);
    }
}
