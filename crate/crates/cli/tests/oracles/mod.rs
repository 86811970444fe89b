//! Independent oracles for the acceptance suite. These deliberately share no
//! code with the library: the SVD is a one-sided Jacobi, ranks come from
//! O(n^2) counting, and the chi-square quantities are direct double loops.

/// One-sided Jacobi SVD of a dense matrix given as rows.
/// Returns singular values sorted descending.
pub fn jacobi_singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    // Work on columns of the tall orientation.
    let (work_rows, work_cols, transposed) = if m >= n { (m, n, false) } else { (n, m, true) };
    let mut w = vec![vec![0f64; work_cols]; work_rows];
    for i in 0..m {
        for j in 0..n {
            if transposed {
                w[j][i] = rows[i][j];
            } else {
                w[i][j] = rows[i][j];
            }
        }
    }
    let eps = 1e-15;
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..work_cols {
            for q in (p + 1)..work_cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for row in &w {
                    alpha += row[p] * row[p];
                    beta += row[q] * row[q];
                    gamma += row[p] * row[q];
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for row in w.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..work_cols)
        .map(|j| w.iter().map(|row| row[j] * row[j]).sum::<f64>().sqrt())
        .collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma
}

/// Pearson chi-square statistic divided by the grand total, by double loop.
pub fn chi2_over_total(table: &[Vec<f64>]) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    let rows = table.len();
    let cols = table[0].len();
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let expected = row_sums[i] * col_sums[j] / total;
            let diff = table[i][j] - expected;
            chi2 += diff * diff / expected;
        }
    }
    chi2 / total
}

/// Squared chi-square distance between rows `i` and `i2` of a contingency
/// table, by the direct profile formula.
pub fn chi2_row_distance_sq(table: &[Vec<f64>], i: usize, i2: usize) -> f64 {
    let total: f64 = table.iter().flatten().sum();
    let cols = table[0].len();
    let row_i: f64 = table[i].iter().sum();
    let row_i2: f64 = table[i2].iter().sum();
    let mut acc = 0.0;
    for j in 0..cols {
        let col_j: f64 = table.iter().map(|r| r[j]).sum::<f64>() / total;
        let profile_diff = table[i][j] / row_i - table[i2][j] / row_i2;
        acc += profile_diff * profile_diff / col_j;
    }
    acc
}

/// Spearman correlation with average ranks computed by O(n^2) counting, and
/// the textbook Pearson formula over the ranks.
pub fn spearman_bruteforce(a: &[f64], b: &[f64]) -> f64 {
    let rank = |values: &[f64]| -> Vec<f64> {
        values
            .iter()
            .map(|&x| {
                let less = values.iter().filter(|&&y| y < x).count();
                let equal = values.iter().filter(|&&y| y == x).count();
                less as f64 + (equal as f64 + 1.0) / 2.0
            })
            .collect()
    };
    let ra = rank(a);
    let rb = rank(b);
    let n = ra.len() as f64;
    let mean_a = ra.iter().sum::<f64>() / n;
    let mean_b = rb.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    cov / (var_a * var_b).sqrt()
}

/// Uniform f64 in [0, 1) from a u64 (shared by the random-table builders).
pub fn unit(x: u64) -> f64 {
    (x >> 11) as f64 * 2f64.powi(-53)
}
