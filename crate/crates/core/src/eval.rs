//! Word-similarity benchmarks: loading, out-of-vocabulary filtering, and
//! scoring embeddings with cosine similarity + Spearman correlation.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::factorize::EmbeddingSet;
use crate::sparse::parse_f64;
use crate::transform::TransformedMatrix;

/// Word pairs with human-assigned similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityDataset {
    name: String,
    pairs: Vec<(String, String, f64)>,
}

impl SimilarityDataset {
    pub fn new(name: impl Into<String>, pairs: Vec<(String, String, f64)>) -> Self {
        Self {
            name: name.into(),
            pairs,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(String, String, f64)] {
        &self.pairs
    }

    /// Keeps exactly the pairs whose both words are in the vocabulary.
    pub fn filter_oov(&self, vocab: &Vocabulary) -> SimilarityDataset {
        SimilarityDataset {
            name: self.name.clone(),
            pairs: self
                .pairs
                .iter()
                .filter(|(a, b, _)| vocab.contains(a) && vocab.contains(b))
                .cloned()
                .collect(),
        }
    }
}

/// Loads `word1 word2 score` records (whitespace- or tab-separated; an
/// optional non-numeric header line is skipped). Words are lowercased to
/// match corpus preprocessing; exact duplicate unordered pairs keep their
/// first occurrence.
pub fn load_dataset(path: &Path) -> Result<SimilarityDataset> {
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected `word1 word2 score`, got {} fields", fields.len()),
            });
        }
        let score = match fields[2].parse::<f64>() {
            Ok(s) => s,
            Err(e) => {
                if lineno == 1 {
                    continue; // header line
                }
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("bad score {:?}: {e}", fields[2]),
                });
            }
        };
        if !score.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("non-finite score {score}"),
            });
        }
        let (w1, w2) = (fields[0].to_lowercase(), fields[1].to_lowercase());
        let key = if w1 <= w2 {
            (w1.clone(), w2.clone())
        } else {
            (w2.clone(), w1.clone())
        };
        if seen.insert(key) {
            pairs.push((w1, w2, score));
        }
    }
    Ok(SimilarityDataset { name, pairs })
}

/// Cosine similarity; errors on a zero vector.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::InvalidParameter(format!(
            "vector lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Average ranks (ties get the mean of the ranks they straddle), 1-based.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0f64; values.len()];
    let mut pos = 0usize;
    while pos < order.len() {
        let mut end = pos + 1;
        while end < order.len() && values[order[end]] == values[order[pos]] {
            end += 1;
        }
        // Positions pos..end share the average of ranks pos+1..=end.
        let avg = (pos + 1 + end) as f64 / 2.0;
        for &idx in &order[pos..end] {
            ranks[idx] = avg;
        }
        pos = end;
    }
    ranks
}

/// Spearman's rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidParameter(format!(
            "list lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(
            "need at least 2 points for a correlation".into(),
        ));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "a score list is constant (zero rank variance)".into(),
        ));
    }
    Ok(cov / (var_a * var_b).sqrt())
}

/// Result of scoring one embedding set against one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    /// Pairs actually correlated, after OOV filtering and zero-vector drops.
    pub pairs_used: usize,
    /// In-vocabulary pairs dropped for zero/missing vectors.
    pub pairs_dropped: usize,
    pub rho: f64,
    pub method: String,
    /// Embedding dimensionality; 0 denotes raw matrix rows (no reduction).
    pub k: usize,
    pub p: f64,
}

impl EvalReport {
    pub const TSV_HEADER: &'static str = "dataset\ttransform\tk\tp\tpairs_used\trho";

    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}",
            self.dataset, self.method, self.k, self.p, self.pairs_used, self.rho
        )
    }
}

/// Writes reports as TSV with the shared header.
pub fn write_reports(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", EvalReport::TSV_HEADER)?;
    for r in reports {
        writeln!(w, "{}", r.tsv_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a report TSV written by [`write_reports`].
pub fn read_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with("dataset\t") {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 6 columns, got {}", f.len()),
            });
        }
        out.push(EvalReport {
            dataset: f[0].to_string(),
            method: f[1].to_string(),
            k: f[2].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad k: {e}"),
            })?,
            p: parse_f64(f[3], lineno)?,
            pairs_used: f[4].parse().map_err(|e| Error::Parse {
                line: lineno,
                msg: format!("bad pairs_used: {e}"),
            })?,
            pairs_dropped: 0,
            rho: parse_f64(f[5], lineno)?,
        });
    }
    Ok(out)
}

fn correlate(
    cosines: Vec<f64>,
    human: Vec<f64>,
    dropped: usize,
    dataset: &str,
    method: String,
    k: usize,
    p: f64,
) -> Result<EvalReport> {
    if cosines.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable pairs in {dataset}",
            cosines.len()
        )));
    }
    let rho = spearman(&cosines, &human)?;
    Ok(EvalReport {
        dataset: dataset.to_string(),
        pairs_used: cosines.len(),
        pairs_dropped: dropped,
        rho,
        method,
        k,
        p,
    })
}

/// Scores an embedding set: Spearman correlation between model cosines and
/// human scores over the OOV-filtered pairs. Pairs with a zero or missing
/// vector are dropped and counted, not scored.
pub fn evaluate(
    e: &EmbeddingSet,
    d: &SimilarityDataset,
    vocab: &Vocabulary,
) -> Result<EvalReport> {
    let filtered = d.filter_oov(vocab);
    let mut cosines = Vec::with_capacity(filtered.len());
    let mut human = Vec::with_capacity(filtered.len());
    let mut dropped = 0usize;
    for (w1, w2, score) in filtered.pairs() {
        let (Some(v1), Some(v2)) = (e.get(w1), e.get(w2)) else {
            dropped += 1;
            continue;
        };
        match cosine(v1, v2) {
            Ok(c) => {
                cosines.push(c);
                human.push(*score);
            }
            Err(Error::ZeroVector) => dropped += 1,
            Err(other) => return Err(other),
        }
    }
    correlate(
        cosines,
        human,
        dropped,
        d.name(),
        e.source_label().to_string(),
        e.k(),
        e.p(),
    )
}

/// Scores raw matrix rows (no dimensionality reduction): each in-vocabulary
/// term's vector is its row of the transformed matrix. Reported with `k = 0`.
pub fn evaluate_matrix_rows(
    m: &TransformedMatrix,
    d: &SimilarityDataset,
    vocab: &Vocabulary,
) -> Result<EvalReport> {
    let filtered = d.filter_oov(vocab);
    let mut cosines = Vec::with_capacity(filtered.len());
    let mut human = Vec::with_capacity(filtered.len());
    let mut dropped = 0usize;
    for (w1, w2, score) in filtered.pairs() {
        let row = |w: &str| {
            vocab
                .get(w)
                .and_then(|orig| m.compact_row(orig))
        };
        let (Some(r1), Some(r2)) = (row(w1), row(w2)) else {
            dropped += 1;
            continue;
        };
        let n1 = m.row_dot(r1, r1).max(0.0).sqrt();
        let n2 = m.row_dot(r2, r2).max(0.0).sqrt();
        if n1 == 0.0 || n2 == 0.0 {
            dropped += 1;
            continue;
        }
        cosines.push((m.row_dot(r1, r2) / (n1 * n2)).clamp(-1.0, 1.0));
        human.push(*score);
    }
    correlate(
        cosines,
        human,
        dropped,
        d.name(),
        m.spec().label(),
        0,
        0.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use std::io::Write as _;

    fn vocab_of(words: &[&str]) -> Vocabulary {
        Vocabulary::from_counts(words.iter().map(|s| (s.to_string(), 10)), 1, 0)
    }

    #[test]
    fn load_parses_rows_and_lowercases() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ws.txt");
        std::fs::write(&path, "Word1 Word2 Score\ntiger cat 7.35\nBook PAPER 5.0\n").unwrap();
        let d = load_dataset(&path).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.pairs()[0], ("tiger".into(), "cat".into(), 7.35));
        assert_eq!(d.pairs()[1].0, "book");
        assert_eq!(d.pairs()[1].1, "paper");
    }

    #[test]
    fn load_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        let d = load_dataset(&path).unwrap();
        assert!(d.is_empty());
    }

    #[test]
    fn load_rejects_two_field_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "tiger cat 7.35\ntiger cat\n").unwrap();
        let err = load_dataset(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn filter_oov_keeps_covered_pairs() {
        let d = SimilarityDataset::new(
            "toy",
            vec![
                ("a".into(), "b".into(), 1.0),
                ("a".into(), "z".into(), 2.0),
            ],
        );
        let f = d.filter_oov(&vocab_of(&["a", "b"]));
        assert_eq!(f.len(), 1);
        let all = d.filter_oov(&vocab_of(&["a", "b", "z"]));
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn cosine_basics() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let c = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((c - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(cosine(&[0.0], &[1.0]), Err(Error::ZeroVector)));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        let rho = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(rho, 0.8);
    }

    #[test]
    fn spearman_average_ranks_for_ties() {
        let r = average_ranks(&[2.0, 1.0, 2.0, 5.0]);
        assert_eq!(r, vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn spearman_rejects_constant_lists() {
        let err = spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert!(matches!(err, Error::UndefinedCorrelation(_)));
    }

    #[test]
    fn spearman_invariant_under_monotone_transform() {
        let a = [0.4, 1.9, -0.3, 7.0, 2.2];
        let b = [1.0, 0.5, 0.2, 0.9, 0.6];
        let base = spearman(&a, &b).unwrap();
        let squashed: Vec<f64> = a.iter().map(|x| x.tanh()).collect();
        assert_eq!(spearman(&squashed, &b).unwrap(), base);
    }

    #[test]
    fn evaluate_reports_used_and_dropped() {
        use crate::factorize::{embeddings, truncated_svd, CoordinateSystem, EmbeddingSpec, Side};
        use crate::transform::{proportions, ttest_matrix};
        use crate::cooccur::CooccurrenceMatrix;

        let x = CooccurrenceMatrix::from_dense(&[
            vec![4.0, 2.0, 1.0],
            vec![2.0, 4.0, 1.0],
            vec![1.0, 1.0, 6.0],
        ])
        .unwrap();
        let f = truncated_svd(&ttest_matrix(&proportions(&x).unwrap()).unwrap(), 2, 7).unwrap();
        let vocab = vocab_of(&["a", "b", "c"]);
        let names: Vec<String> = vocab.terms().to_vec();
        let e = embeddings(
            &f,
            &EmbeddingSpec { k: 2, p: 0.5 },
            CoordinateSystem::Alternative,
            Side::Target,
            &names,
        )
        .unwrap();
        let d = SimilarityDataset::new(
            "toy",
            vec![
                ("a".into(), "b".into(), 5.0),
                ("a".into(), "c".into(), 1.0),
                ("b".into(), "c".into(), 2.0),
                ("a".into(), "zzz".into(), 9.0),
            ],
        );
        let report = evaluate(&e, &d, &vocab).unwrap();
        assert_eq!(report.pairs_used, 3);
        assert_eq!(report.pairs_dropped, 0);
        assert!(report.rho >= -1.0 && report.rho <= 1.0);
    }

    #[test]
    fn evaluate_insufficient_pairs() {
        use crate::factorize::{embeddings, truncated_svd, CoordinateSystem, EmbeddingSpec, Side};
        use crate::transform::{proportions, ttest_matrix};
        use crate::cooccur::CooccurrenceMatrix;

        let x = CooccurrenceMatrix::from_dense(&[vec![3.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let f = truncated_svd(&ttest_matrix(&proportions(&x).unwrap()).unwrap(), 1, 7).unwrap();
        let vocab = vocab_of(&["a", "b"]);
        let e = embeddings(
            &f,
            &EmbeddingSpec { k: 1, p: 0.0 },
            CoordinateSystem::Alternative,
            Side::Target,
            &vocab.terms().to_vec(),
        )
        .unwrap();
        let d = SimilarityDataset::new("toy", vec![("a".into(), "b".into(), 5.0)]);
        assert!(matches!(
            evaluate(&e, &d, &vocab),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn report_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.tsv");
        let reports = vec![EvalReport {
            dataset: "ws".into(),
            pairs_used: 10,
            pairs_dropped: 1,
            rho: 0.5,
            method: "PPMI".into(),
            k: 50,
            p: 0.5,
        }];
        write_reports(&path, &reports).unwrap();
        let back = read_reports(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].dataset, "ws");
        assert_eq!(back[0].k, 50);
        assert!((back[0].rho - 0.5).abs() < 1e-9);
    }

    #[test]
    fn same_word_pair_has_cosine_one() {
        let v = [0.3, -0.4, 1.1];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-15);
    }
}
