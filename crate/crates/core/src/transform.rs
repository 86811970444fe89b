//! Matrix transformations applied to co-occurrence counts before
//! factorization: standardized residuals (TTEST), the power-transform
//! residual family (POWER_CA), PMI / PPMI / WPMI, and the square-root
//! contingency-ratio matrix (STRATOS).
//!
//! Centered matrices (TTEST, POWER_CA) are dense in principle: every cell
//! off the count support holds `-sqrt(p_i+) * sqrt(p_+j)`. They are stored
//! as explicit values on the support plus the two margin-scale vectors, so
//! nothing is ever densified at corpus scale.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::cooccur::CooccurrenceMatrix;
use crate::error::{Error, Result};
use crate::exec;
use crate::sparse::{fmt_g17, parse_f64, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Ttest,
    Pmi,
    Ppmi,
    Wpmi,
    Stratos,
    PowerCa,
}

/// A transform selection; `delta` is the power exponent used only by
/// `POWER_CA` (1 -> raw counts, 0.5 -> square root, 0.25 -> fourth root).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub delta: Option<f64>,
}

impl TransformSpec {
    pub fn new(kind: TransformKind) -> Self {
        debug_assert!(kind != TransformKind::PowerCa);
        Self { kind, delta: None }
    }

    pub fn power_ca(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "delta must be in (0, 1], got {delta}"
            )));
        }
        Ok(Self {
            kind: TransformKind::PowerCa,
            delta: Some(delta),
        })
    }

    /// Whether the transform produces a centered residual matrix.
    pub fn is_centered(&self) -> bool {
        matches!(self.kind, TransformKind::Ttest | TransformKind::PowerCa)
    }

    /// Header label, e.g. `PMI` or `POWER_CA delta=0.25`.
    pub fn label(&self) -> String {
        match self.kind {
            TransformKind::Ttest => "TTEST".into(),
            TransformKind::Pmi => "PMI".into(),
            TransformKind::Ppmi => "PPMI".into(),
            TransformKind::Wpmi => "WPMI".into(),
            TransformKind::Stratos => "STRATOS".into(),
            TransformKind::PowerCa => format!("POWER_CA delta={}", self.delta.unwrap_or(1.0)),
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let kind = it.next().unwrap_or("");
        match kind {
            "TTEST" => Ok(Self::new(TransformKind::Ttest)),
            "PMI" => Ok(Self::new(TransformKind::Pmi)),
            "PPMI" => Ok(Self::new(TransformKind::Ppmi)),
            "WPMI" => Ok(Self::new(TransformKind::Wpmi)),
            "STRATOS" => Ok(Self::new(TransformKind::Stratos)),
            "POWER_CA" => {
                let delta = it
                    .next()
                    .and_then(|f| f.strip_prefix("delta=").map(str::to_string))
                    .ok_or_else(|| Error::InvalidParameter(format!("bad transform label {s:?}")))?
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("bad delta in {s:?}: {e}")))?;
                Self::power_ca(delta)
            }
            _ => Err(Error::InvalidParameter(format!(
                "unknown transform label {s:?}"
            ))),
        }
    }
}

/// Joint proportions `p_ij = x_ij / x_++` with exact margins.
///
/// Rows and columns whose counts are entirely zero are dropped before any
/// transform; `row_map`/`col_map` record the compact-to-original mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct ProportionTable {
    p: SparseMatrix,
    row_margins: Vec<f64>,
    col_margins: Vec<f64>,
    grand_total: f64,
    row_map: Vec<u32>,
    col_map: Vec<u32>,
    orig_rows: usize,
    orig_cols: usize,
}

impl ProportionTable {
    pub fn nrows(&self) -> usize {
        self.p.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.p.ncols()
    }

    pub fn proportions(&self) -> &SparseMatrix {
        &self.p
    }

    pub fn row_margins(&self) -> &[f64] {
        &self.row_margins
    }

    pub fn col_margins(&self) -> &[f64] {
        &self.col_margins
    }

    /// Grand total `x_++` of the source counts.
    pub fn grand_total(&self) -> f64 {
        self.grand_total
    }

    pub fn row_map(&self) -> &[u32] {
        &self.row_map
    }

    pub fn col_map(&self) -> &[u32] {
        &self.col_map
    }

    /// Builds a table from a dense matrix of non-negative weights; test and
    /// small-scale entry point.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        proportions(&CooccurrenceMatrix::from_dense(rows)?)
    }
}

/// Converts counts to joint proportions with exact margins, dropping empty
/// rows and columns.
pub fn proportions(x: &CooccurrenceMatrix) -> Result<ProportionTable> {
    let m = x.matrix();
    let total: f64 = m.values().iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateInput(
            "co-occurrence matrix has zero total mass".into(),
        ));
    }
    let row_sums = m.row_sums();
    let col_sums = m.col_sums();
    let row_map: Vec<u32> = (0..m.nrows() as u32).filter(|&i| row_sums[i as usize] > 0.0).collect();
    let col_map: Vec<u32> = (0..m.ncols() as u32).filter(|&j| col_sums[j as usize] > 0.0).collect();
    let mut col_compact = vec![u32::MAX; m.ncols()];
    for (cj, &j) in col_map.iter().enumerate() {
        col_compact[j as usize] = cj as u32;
    }
    let mut triplets = Vec::with_capacity(m.nnz());
    for (ci, &i) in row_map.iter().enumerate() {
        let (cols, vals) = m.row(i as usize);
        for (&j, &v) in cols.iter().zip(vals) {
            triplets.push((ci as u32, col_compact[j as usize], v / total));
        }
    }
    let p = SparseMatrix::from_sorted_triplets(row_map.len(), col_map.len(), &triplets)?;
    Ok(ProportionTable {
        row_margins: p.row_sums(),
        col_margins: p.col_sums(),
        p,
        grand_total: total,
        row_map,
        col_map,
        orig_rows: m.nrows(),
        orig_cols: m.ncols(),
    })
}

/// A transformed matrix over the support mask of the source counts.
///
/// For centered kinds the stored values are the final residuals at support
/// cells and `value(i, j) = -row_scale[i] * col_scale[j]` elsewhere; for the
/// PMI family and STRATOS, off-support values are structural zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    spec: TransformSpec,
    values: SparseMatrix,
    /// `(sqrt(p_i+), sqrt(p_+j))` for centered kinds.
    centering: Option<(Vec<f64>, Vec<f64>)>,
    row_margins: Vec<f64>,
    col_margins: Vec<f64>,
    row_map: Vec<u32>,
    col_map: Vec<u32>,
    orig_rows: usize,
    orig_cols: usize,
}

impl TransformedMatrix {
    pub fn spec(&self) -> &TransformSpec {
        &self.spec
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    /// Values at support cells, pattern = support mask of the source counts.
    pub fn support(&self) -> &SparseMatrix {
        &self.values
    }

    pub fn support_nnz(&self) -> usize {
        self.values.nnz()
    }

    pub fn centering(&self) -> Option<(&[f64], &[f64])> {
        self.centering
            .as_ref()
            .map(|(r, c)| (r.as_slice(), c.as_slice()))
    }

    pub fn row_margins(&self) -> &[f64] {
        &self.row_margins
    }

    pub fn col_margins(&self) -> &[f64] {
        &self.col_margins
    }

    pub fn row_map(&self) -> &[u32] {
        &self.row_map
    }

    pub fn col_map(&self) -> &[u32] {
        &self.col_map
    }

    /// Compact row index of an original (pre-drop) row index.
    pub fn compact_row(&self, original: u32) -> Option<usize> {
        self.row_map.binary_search(&original).ok()
    }

    /// Row count of the original (pre-drop) index space.
    pub fn orig_rows(&self) -> usize {
        self.orig_rows
    }

    pub fn orig_cols(&self) -> usize {
        self.orig_cols
    }

    /// Reweights a PMI matrix into the WPMI matrix
    /// `sqrt(p_i+ p_+j) * PMI(i, j)` using the stored margins.
    pub fn reweight_pmi_to_wpmi(&self) -> Result<TransformedMatrix> {
        if self.spec.kind != TransformKind::Pmi {
            return Err(Error::InvalidParameter(format!(
                "expected a PMI matrix, got {}",
                self.spec.label()
            )));
        }
        let rows: Vec<Vec<(u32, f64)>> = exec::map_collect(self.nrows(), |i| {
            let rm = self.row_margins[i];
            let (cols, vals) = self.values.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&j, &v)| (j, (rm * self.col_margins[j as usize]).sqrt() * v))
                .collect()
        });
        let mut triplets = Vec::with_capacity(self.values.nnz());
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                triplets.push((i as u32, j, v));
            }
        }
        let values = SparseMatrix::from_sorted_triplets(self.nrows(), self.ncols(), &triplets)
            .expect("pattern copied from the PMI matrix");
        Ok(TransformedMatrix {
            spec: TransformSpec::new(TransformKind::Wpmi),
            values,
            centering: None,
            row_margins: self.row_margins.clone(),
            col_margins: self.col_margins.clone(),
            row_map: self.row_map.clone(),
            col_map: self.col_map.clone(),
            orig_rows: self.orig_rows,
            orig_cols: self.orig_cols,
        })
    }

    /// Value of cell `(i, j)` in compact coordinates.
    pub fn value(&self, i: usize, j: usize) -> f64 {
        match self.values.get(i, j) {
            Some(v) => v,
            None => match &self.centering {
                Some((r, c)) => -r[i] * c[j],
                None => 0.0,
            },
        }
    }

    /// Exact row sums including off-support cells.
    pub fn row_sums(&self) -> Vec<f64> {
        match &self.centering {
            None => self.values.row_sums(),
            Some((r, c)) => {
                let c_total: f64 = c.iter().sum();
                exec::map_collect(self.nrows(), |i| {
                    let (cols, vals) = self.values.row(i);
                    let on_support: f64 = vals.iter().sum();
                    let c_support: f64 = cols.iter().map(|&j| c[j as usize]).sum();
                    on_support - r[i] * (c_total - c_support)
                })
            }
        }
    }

    pub fn col_sums(&self) -> Vec<f64> {
        match &self.centering {
            None => self.values.col_sums(),
            Some((r, c)) => {
                let r_total: f64 = r.iter().sum();
                let mut on_support = vec![0f64; self.ncols()];
                let mut r_support = vec![0f64; self.ncols()];
                for (i, j, v) in self.values.iter() {
                    on_support[j as usize] += v;
                    r_support[j as usize] += r[i as usize];
                }
                (0..self.ncols())
                    .map(|j| on_support[j] - c[j] * (r_total - r_support[j]))
                    .collect()
            }
        }
    }

    /// `sum_j value(i, j) * sqrt(p_+j)` per row. For centered kinds these
    /// vanish: the residual matrix annihilates the sqrt-margin vector, which
    /// is what caps the CA rank at `min(I-1, J-1)`.
    pub fn weighted_row_sums(&self) -> Vec<f64> {
        let c: Vec<f64> = self.col_margins.iter().map(|m| m.sqrt()).collect();
        let c_sq_total: f64 = c.iter().map(|x| x * x).sum();
        exec::map_collect(self.nrows(), |i| {
            let (cols, vals) = self.values.row(i);
            let mut acc = 0.0;
            let mut c_sq_support = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                let cj = c[j as usize];
                acc += v * cj;
                c_sq_support += cj * cj;
            }
            match &self.centering {
                Some((r, _)) => acc - r[i] * (c_sq_total - c_sq_support),
                None => acc,
            }
        })
    }

    /// `sum_i sqrt(p_i+) * value(i, j)` per column; see
    /// [`Self::weighted_row_sums`].
    pub fn weighted_col_sums(&self) -> Vec<f64> {
        let r: Vec<f64> = self.row_margins.iter().map(|m| m.sqrt()).collect();
        let r_sq_total: f64 = r.iter().map(|x| x * x).sum();
        let mut acc = vec![0f64; self.ncols()];
        let mut r_sq_support = vec![0f64; self.ncols()];
        for (i, j, v) in self.values.iter() {
            let ri = r[i as usize];
            acc[j as usize] += ri * v;
            r_sq_support[j as usize] += ri * ri;
        }
        match &self.centering {
            Some((_, c)) => (0..self.ncols())
                .map(|j| acc[j] - c[j] * (r_sq_total - r_sq_support[j]))
                .collect(),
            None => acc,
        }
    }

    /// Squared Frobenius norm over all cells; for centered kinds this is the
    /// total inertia of the table.
    pub fn frobenius_sq(&self) -> f64 {
        let on_support: f64 = self.values.values().iter().map(|v| v * v).sum();
        match &self.centering {
            None => on_support,
            Some((r, c)) => {
                let r_sq: f64 = r.iter().map(|x| x * x).sum();
                let c_sq: f64 = c.iter().map(|x| x * x).sum();
                let support_rank1: f64 = self
                    .values
                    .iter()
                    .map(|(i, j, _)| {
                        let rc = r[i as usize] * c[j as usize];
                        rc * rc
                    })
                    .sum();
                on_support + (r_sq * c_sq - support_rank1)
            }
        }
    }

    /// `y = M x` without densifying.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols());
        match &self.centering {
            None => exec::map_collect(self.nrows(), |i| {
                let (cols, vals) = self.values.row(i);
                cols.iter()
                    .zip(vals)
                    .map(|(&j, &v)| v * x[j as usize])
                    .sum()
            }),
            Some((r, c)) => {
                let cx: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
                exec::map_collect(self.nrows(), |i| {
                    let (cols, vals) = self.values.row(i);
                    let mut acc = 0.0;
                    let mut c_support = 0.0;
                    for (&j, &v) in cols.iter().zip(vals) {
                        acc += v * x[j as usize];
                        c_support += c[j as usize] * x[j as usize];
                    }
                    acc - r[i] * (cx - c_support)
                })
            }
        }
    }

    /// Dot product of two rows over all cells; powers the no-reduction
    /// (matrix rows as embeddings) evaluation.
    pub fn row_dot(&self, i: usize, i2: usize) -> f64 {
        let (cols_a, vals_a) = self.values.row(i);
        let (cols_b, vals_b) = self.values.row(i2);
        match &self.centering {
            None => {
                let mut acc = 0.0;
                let (mut a, mut b) = (0usize, 0usize);
                while a < cols_a.len() && b < cols_b.len() {
                    match cols_a[a].cmp(&cols_b[b]) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => b += 1,
                        std::cmp::Ordering::Equal => {
                            acc += vals_a[a] * vals_b[b];
                            a += 1;
                            b += 1;
                        }
                    }
                }
                acc
            }
            Some((r, c)) => {
                // Split the sum by support membership:
                //   both rows on support: v_a * v_b
                //   only row a:           v_a * (-r_b c_j)
                //   only row b:           (-r_a c_j) * v_b
                //   neither:              r_a r_b c_j^2
                let (ra, rb) = (r[i], r[i2]);
                let c_sq_total: f64 = c.iter().map(|x| x * x).sum();
                let mut acc = 0.0;
                let mut c_sq_union = 0.0;
                let (mut a, mut b) = (0usize, 0usize);
                while a < cols_a.len() || b < cols_b.len() {
                    let ja = cols_a.get(a).copied().unwrap_or(u32::MAX);
                    let jb = cols_b.get(b).copied().unwrap_or(u32::MAX);
                    if ja < jb {
                        let cj = c[ja as usize];
                        acc += vals_a[a] * (-rb * cj);
                        c_sq_union += cj * cj;
                        a += 1;
                    } else if jb < ja {
                        let cj = c[jb as usize];
                        acc += (-ra * cj) * vals_b[b];
                        c_sq_union += cj * cj;
                        b += 1;
                    } else {
                        let cj = c[ja as usize];
                        acc += vals_a[a] * vals_b[b];
                        c_sq_union += cj * cj;
                        a += 1;
                        b += 1;
                    }
                }
                acc + ra * rb * (c_sq_total - c_sq_union)
            }
        }
    }

    /// Densifies; intended for small matrices and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0f64; self.ncols()]; self.nrows()];
        if let Some((r, c)) = &self.centering {
            for (i, row) in rows.iter_mut().enumerate() {
                for (j, cell) in row.iter_mut().enumerate() {
                    *cell = -r[i] * c[j];
                }
            }
        }
        for (i, j, v) in self.values.iter() {
            rows[i as usize][j as usize] = v;
        }
        rows
    }

    /// Wraps a dense matrix with every cell on the support; used by tests and
    /// by consumers that already hold explicit values.
    pub fn from_dense_full(rows: &[Vec<f64>], spec: TransformSpec) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        let mut triplets = Vec::with_capacity(nrows * ncols);
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                triplets.push((i as u32, j as u32, v));
            }
        }
        let values = SparseMatrix::from_sorted_triplets(nrows, ncols, &triplets)
            .expect("dense scan is sorted");
        TransformedMatrix {
            spec,
            values,
            centering: None,
            row_margins: vec![0.0; nrows],
            col_margins: vec![0.0; ncols],
            row_map: (0..nrows as u32).collect(),
            col_map: (0..ncols as u32).collect(),
            orig_rows: nrows,
            orig_cols: ncols,
        }
    }

    /// Writes the triplet format with `%dim`, `%transform`, and margin
    /// headers. Indices are written in the original (pre-drop) space.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "%dim {} {}", self.orig_rows, self.orig_cols)?;
        writeln!(w, "%transform {}", self.spec.label())?;
        write_margin_line(&mut w, "%row-margins", &self.row_margins, &self.row_map, self.orig_rows)?;
        write_margin_line(&mut w, "%col-margins", &self.col_margins, &self.col_map, self.orig_cols)?;
        for (i, j, v) in self.values.iter() {
            writeln!(
                w,
                "{}\t{}\t{}",
                self.row_map[i as usize],
                self.col_map[j as usize],
                fmt_g17(v)
            )?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut dims: Option<(usize, usize)> = None;
        let mut spec: Option<TransformSpec> = None;
        let mut row_margins_full: Option<Vec<f64>> = None;
        let mut col_margins_full: Option<Vec<f64>> = None;
        let mut triplets: Vec<(u32, u32, f64)> = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("%dim ") {
                let mut it = rest.split_whitespace();
                dims = Some((
                    parse_field(it.next(), lineno)?,
                    parse_field(it.next(), lineno)?,
                ));
            } else if let Some(rest) = line.strip_prefix("%transform ") {
                spec = Some(TransformSpec::parse_label(rest.trim())?);
            } else if let Some(rest) = line.strip_prefix("%row-margins ") {
                row_margins_full = Some(parse_margins(rest, lineno)?);
            } else if let Some(rest) = line.strip_prefix("%col-margins ") {
                col_margins_full = Some(parse_margins(rest, lineno)?);
            } else if line.starts_with('%') {
                continue;
            } else {
                let mut it = line.split('\t');
                let i: u32 = parse_field(it.next(), lineno)? as u32;
                let j: u32 = parse_field(it.next(), lineno)? as u32;
                let v = parse_f64(it.next().unwrap_or(""), lineno)?;
                triplets.push((i, j, v));
            }
        }
        let (orig_rows, orig_cols) = dims.ok_or(Error::Parse {
            line: 1,
            msg: "missing %dim header".into(),
        })?;
        let spec = spec.ok_or(Error::Parse {
            line: 1,
            msg: "missing %transform header".into(),
        })?;
        let row_margins_full = row_margins_full.ok_or(Error::Parse {
            line: 1,
            msg: "missing %row-margins header".into(),
        })?;
        let col_margins_full = col_margins_full.ok_or(Error::Parse {
            line: 1,
            msg: "missing %col-margins header".into(),
        })?;
        if row_margins_full.len() != orig_rows || col_margins_full.len() != orig_cols {
            return Err(Error::Parse {
                line: 1,
                msg: "margin length does not match %dim".into(),
            });
        }
        let row_map: Vec<u32> = (0..orig_rows as u32)
            .filter(|&i| row_margins_full[i as usize] > 0.0)
            .collect();
        let col_map: Vec<u32> = (0..orig_cols as u32)
            .filter(|&j| col_margins_full[j as usize] > 0.0)
            .collect();
        let mut row_compact = vec![u32::MAX; orig_rows];
        for (ci, &i) in row_map.iter().enumerate() {
            row_compact[i as usize] = ci as u32;
        }
        let mut col_compact = vec![u32::MAX; orig_cols];
        for (cj, &j) in col_map.iter().enumerate() {
            col_compact[j as usize] = cj as u32;
        }
        let compact: Vec<(u32, u32, f64)> = triplets
            .into_iter()
            .map(|(i, j, v)| {
                let (ci, cj) = (row_compact[i as usize], col_compact[j as usize]);
                if ci == u32::MAX || cj == u32::MAX {
                    Err(Error::Parse {
                        line: 0,
                        msg: format!("entry ({i}, {j}) lies on a zero margin"),
                    })
                } else {
                    Ok((ci, cj, v))
                }
            })
            .collect::<Result<_>>()?;
        let values =
            SparseMatrix::from_sorted_triplets(row_map.len(), col_map.len(), &compact)?;
        let row_margins: Vec<f64> = row_map.iter().map(|&i| row_margins_full[i as usize]).collect();
        let col_margins: Vec<f64> = col_map.iter().map(|&j| col_margins_full[j as usize]).collect();
        let centering = spec.is_centered().then(|| {
            (
                row_margins.iter().map(|m| m.sqrt()).collect::<Vec<f64>>(),
                col_margins.iter().map(|m| m.sqrt()).collect::<Vec<f64>>(),
            )
        });
        Ok(TransformedMatrix {
            spec,
            values,
            centering,
            row_margins,
            col_margins,
            row_map,
            col_map,
            orig_rows,
            orig_cols,
        })
    }
}

fn write_margin_line(
    w: &mut impl Write,
    tag: &str,
    margins: &[f64],
    map: &[u32],
    orig_len: usize,
) -> Result<()> {
    let mut full = vec![0f64; orig_len];
    for (compact, &orig) in map.iter().enumerate() {
        full[orig as usize] = margins[compact];
    }
    write!(w, "{tag}")?;
    for v in full {
        write!(w, " {}", fmt_g17(v))?;
    }
    writeln!(w)?;
    Ok(())
}

fn parse_margins(rest: &str, lineno: usize) -> Result<Vec<f64>> {
    rest.split_whitespace()
        .map(|f| parse_f64(f, lineno))
        .collect()
}

fn parse_field(field: Option<&str>, line: usize) -> Result<usize> {
    let field = field.ok_or(Error::Parse {
        line,
        msg: "missing field".into(),
    })?;
    field.trim().parse().map_err(|e| Error::Parse {
        line,
        msg: format!("bad integer {field:?}: {e}"),
    })
}

fn check_margins(t: &ProportionTable) -> Result<()> {
    if let Some(i) = t.row_margins.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroMargin {
            axis: "row",
            index: t.row_map[i] as usize,
        });
    }
    if let Some(j) = t.col_margins.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::ZeroMargin {
            axis: "column",
            index: t.col_map[j] as usize,
        });
    }
    Ok(())
}

/// Builds a transformed matrix by mapping each support cell of `t` through
/// `cell(p_ij, p_i+, p_+j)`; row-parallel.
fn build_from_table(
    t: &ProportionTable,
    spec: TransformSpec,
    centered: bool,
    cell: impl Fn(f64, f64, f64) -> f64 + Sync,
) -> TransformedMatrix {
    let values = {
        let p = &t.p;
        let rows: Vec<Vec<(u32, f64)>> = exec::map_collect(p.nrows(), |i| {
            let rm = t.row_margins[i];
            let (cols, vals) = p.row(i);
            cols.iter()
                .zip(vals)
                .map(|(&j, &v)| (j, cell(v, rm, t.col_margins[j as usize])))
                .collect()
        });
        let mut triplets = Vec::with_capacity(p.nnz());
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                triplets.push((i as u32, j, v));
            }
        }
        SparseMatrix::from_sorted_triplets(p.nrows(), p.ncols(), &triplets)
            .expect("pattern copied from the proportion table")
    };
    let centering = centered.then(|| {
        (
            t.row_margins.iter().map(|m| m.sqrt()).collect::<Vec<f64>>(),
            t.col_margins.iter().map(|m| m.sqrt()).collect::<Vec<f64>>(),
        )
    });
    TransformedMatrix {
        spec,
        values,
        centering,
        row_margins: t.row_margins.clone(),
        col_margins: t.col_margins.clone(),
        row_map: t.row_map.clone(),
        col_map: t.col_map.clone(),
        orig_rows: t.orig_rows,
        orig_cols: t.orig_cols,
    }
}

/// Standardized residuals `(p_ij - p_i+ p_+j) / sqrt(p_i+ p_+j)`.
pub fn ttest_matrix(t: &ProportionTable) -> Result<TransformedMatrix> {
    residual_matrix(t, TransformSpec::new(TransformKind::Ttest))
}

fn residual_matrix(t: &ProportionTable, spec: TransformSpec) -> Result<TransformedMatrix> {
    check_margins(t)?;
    Ok(build_from_table(t, spec, true, |p, rm, cm| {
        (p - rm * cm) / (rm * cm).sqrt()
    }))
}

/// Residual matrix of the element-wise power transform `x_ij^delta`.
///
/// `delta = 1` reproduces `ttest_matrix(proportions(x))` bit for bit;
/// `delta = 0.5` and `delta = 0.25` use exact square roots.
pub fn power_ca_matrix(x: &CooccurrenceMatrix, delta: f64) -> Result<TransformedMatrix> {
    let spec = TransformSpec::power_ca(delta)?;
    let powered = if delta == 1.0 {
        proportions(x)?
    } else {
        let mapped = if delta == 0.5 {
            x.matrix().map_values(f64::sqrt)
        } else if delta == 0.25 {
            x.matrix().map_values(|v| v.sqrt().sqrt())
        } else {
            x.matrix().map_values(|v| v.powf(delta))
        };
        let triplets: Vec<(u32, u32, f64)> = mapped.iter().collect();
        proportions(&CooccurrenceMatrix::from_triplets(
            x.dim(),
            &triplets,
            x.vocab_hash(),
        )?)?
    };
    residual_matrix(&powered, spec)
}

fn pmi_cell(p: f64, rm: f64, cm: f64) -> f64 {
    (p / (rm * cm)).ln()
}

/// `log(p_ij / (p_i+ p_+j))` on the support; zero cells stay zero.
pub fn pmi_matrix(t: &ProportionTable) -> Result<TransformedMatrix> {
    check_margins(t)?;
    Ok(build_from_table(
        t,
        TransformSpec::new(TransformKind::Pmi),
        false,
        pmi_cell,
    ))
}

/// PMI with negative values clipped to zero.
pub fn ppmi_matrix(t: &ProportionTable) -> Result<TransformedMatrix> {
    check_margins(t)?;
    Ok(build_from_table(
        t,
        TransformSpec::new(TransformKind::Ppmi),
        false,
        |p, rm, cm| pmi_cell(p, rm, cm).max(0.0),
    ))
}

/// `sqrt(p_i+ p_+j) * PMI(i, j)`; the matrix the margin-weighted PMI
/// factorization decomposes.
pub fn wpmi_matrix(t: &ProportionTable) -> Result<TransformedMatrix> {
    check_margins(t)?;
    Ok(build_from_table(
        t,
        TransformSpec::new(TransformKind::Wpmi),
        false,
        |p, rm, cm| (rm * cm).sqrt() * pmi_cell(p, rm, cm),
    ))
}

/// `sqrt(p_ij / sqrt(p_i+ p_+j))`, uncentered.
pub fn stratos_matrix(t: &ProportionTable) -> Result<TransformedMatrix> {
    check_margins(t)?;
    Ok(build_from_table(
        t,
        TransformSpec::new(TransformKind::Stratos),
        false,
        |p, rm, cm| (p / (rm * cm).sqrt()).sqrt(),
    ))
}
