//! Sparse symmetric word-context counting with distance-weighted windows.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{TokenStream, Vocabulary};
use crate::error::{Error, Result};
use crate::exec;
use crate::sparse::{fmt_g17, parse_f64, SparseMatrix};

/// Targets per counting chunk; fixed so the merge order (and therefore the
/// floating-point result) does not depend on thread count.
const COUNT_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// A context at distance `d` contributes `1/d`.
    Harmonic,
    /// Every context within the window contributes `1`.
    Uniform,
}

impl Weighting {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(Self::Harmonic),
            "uniform" => Ok(Self::Uniform),
            _ => Err(Error::InvalidParameter(format!("unknown weighting {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Harmonic => "harmonic",
            Self::Uniform => "uniform",
        }
    }
}

/// What to do with out-of-vocabulary tokens before windowing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OovPolicy {
    /// Delete OOV tokens; distances are measured on the filtered stream.
    Delete,
    /// Keep OOV tokens as position holders; pairs touching them are skipped.
    HoldPosition,
}

impl OovPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "delete" => Ok(Self::Delete),
            "hold-position" => Ok(Self::HoldPosition),
            _ => Err(Error::InvalidParameter(format!("unknown oov policy {s:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Delete => "delete",
            Self::HoldPosition => "hold-position",
        }
    }
}

/// Sparse symmetric matrix of weighted co-occurrence counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    dim: usize,
    matrix: SparseMatrix,
    vocab_hash: u64,
}

impl CooccurrenceMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn vocab_hash(&self) -> u64 {
        self.vocab_hash
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Sum of all weights `x_++`.
    pub fn total_mass(&self) -> f64 {
        self.matrix.values().iter().sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j).unwrap_or(0.0)
    }

    /// Builds from arbitrary triplets (duplicates are summed). Entries must
    /// be non-negative.
    pub fn from_triplets(dim: usize, triplets: &[(u32, u32, f64)], vocab_hash: u64) -> Result<Self> {
        let mut acc: BTreeMap<(u32, u32), f64> = BTreeMap::new();
        for &(i, j, v) in triplets {
            if v < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "negative count at ({i}, {j})"
                )));
            }
            *acc.entry((i, j)).or_insert(0.0) += v;
        }
        let sorted: Vec<(u32, u32, f64)> = acc.into_iter().map(|((i, j), v)| (i, j, v)).collect();
        Ok(Self {
            dim,
            matrix: SparseMatrix::from_sorted_triplets(dim, dim, &sorted)?,
            vocab_hash,
        })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i as u32, j as u32, v));
                }
            }
        }
        Self::from_triplets(dim, &triplets, 0)
    }

    /// Writes the sparse triplet format: `%dim I J`, then `i<TAB>j<TAB>value`
    /// sorted by `(i, j)`.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "%dim {} {}", self.dim, self.dim)?;
        for (i, j, v) in self.matrix.iter() {
            writeln!(w, "{i}\t{j}\t{}", fmt_g17(v))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut dim: Option<usize> = None;
        let mut triplets = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("%dim ") {
                let mut it = rest.split_whitespace();
                let rows: usize = parse_usize(it.next(), lineno)?;
                let cols: usize = parse_usize(it.next(), lineno)?;
                if rows != cols {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "co-occurrence matrix must be square".into(),
                    });
                }
                dim = Some(rows);
                continue;
            }
            if line.starts_with('%') {
                continue;
            }
            let mut it = line.split('\t');
            let i: u32 = parse_usize(it.next(), lineno)? as u32;
            let j: u32 = parse_usize(it.next(), lineno)? as u32;
            let v = parse_f64(it.next().unwrap_or(""), lineno)?;
            triplets.push((i, j, v));
        }
        let dim = dim.ok_or(Error::Parse {
            line: 1,
            msg: "missing %dim header".into(),
        })?;
        Ok(Self {
            dim,
            matrix: SparseMatrix::from_sorted_triplets(dim, dim, &triplets)?,
            vocab_hash: 0,
        })
    }
}

fn parse_usize(field: Option<&str>, line: usize) -> Result<usize> {
    let field = field.ok_or(Error::Parse {
        line,
        msg: "missing field".into(),
    })?;
    field.trim().parse().map_err(|e| Error::Parse {
        line,
        msg: format!("bad integer {field:?}: {e}"),
    })
}

/// Counts weighted co-occurrences over symmetric windows.
///
/// For each in-vocabulary target at position `t` and in-vocabulary context at
/// distance `d <= window` within the same segment, the entries
/// `(target, context)` and `(context, target)` are incremented by the window
/// weight. Windows truncate at segment edges; there is no padding.
pub fn count_cooccurrences(
    stream: &TokenStream,
    vocab: &Vocabulary,
    window: usize,
    weighting: Weighting,
    oov: OovPolicy,
) -> Result<CooccurrenceMatrix> {
    if window < 1 {
        return Err(Error::InvalidParameter("window must be >= 1".into()));
    }
    if stream.rules_hash() != vocab.rules_hash() {
        return Err(Error::FingerprintMismatch {
            context: "token stream preprocessing vs vocabulary",
            got: stream.rules_hash(),
            expected: vocab.rules_hash(),
        });
    }

    let segmented = !stream.boundaries().is_empty();
    let seg_ids = if segmented {
        stream.segment_ids()
    } else {
        Vec::new()
    };

    // (vocab id or hole, segment id) in stream order, with OOV handling applied.
    let ids: Vec<(Option<u32>, u32)> = {
        let tokens = stream.tokens();
        let mapped: Vec<(Option<u32>, u32)> = exec::map_collect(tokens.len(), |t| {
            let seg = if segmented { seg_ids[t] } else { 0 };
            (vocab.get(&tokens[t]), seg)
        });
        match oov {
            OovPolicy::HoldPosition => mapped,
            OovPolicy::Delete => mapped.into_iter().filter(|(id, _)| id.is_some()).collect(),
        }
    };

    let ranges = exec::chunk_ranges(ids.len(), COUNT_CHUNK);
    let partials: Vec<Vec<((u32, u32), f64)>> = exec::map_collect(ranges.len(), |c| {
        let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
        for t in ranges[c].clone() {
            let (Some(a), seg_a) = ids[t] else { continue };
            for d in 1..=window {
                let s = t + d;
                if s >= ids.len() {
                    break;
                }
                let (b, seg_b) = ids[s];
                if seg_b != seg_a {
                    break;
                }
                let Some(b) = b else { continue };
                let inc = match weighting {
                    Weighting::Harmonic => 1.0 / d as f64,
                    Weighting::Uniform => 1.0,
                };
                *acc.entry((a, b)).or_insert(0.0) += inc;
                *acc.entry((b, a)).or_insert(0.0) += inc;
            }
        }
        let mut sorted: Vec<((u32, u32), f64)> = acc.into_iter().collect();
        sorted.sort_unstable_by_key(|&(key, _)| key);
        sorted
    });

    // Merge per-chunk accumulators in chunk order: every cell receives its
    // contributions in stream order, so the result is executor-independent.
    let mut merged: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for partial in partials {
        for (key, v) in partial {
            *merged.entry(key).or_insert(0.0) += v;
        }
    }
    let triplets: Vec<(u32, u32, f64)> = merged.into_iter().map(|((i, j), v)| (i, j, v)).collect();
    Ok(CooccurrenceMatrix {
        dim: vocab.len(),
        matrix: SparseMatrix::from_sorted_triplets(vocab.len(), vocab.len(), &triplets)?,
        vocab_hash: vocab.fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenizeConfig;

    fn stream_of(words: &[&str], boundaries: Vec<usize>) -> TokenStream {
        TokenStream::from_parts(
            words.iter().map(|s| s.to_string()).collect(),
            boundaries,
            TokenizeConfig::default().rules_hash(),
        )
    }

    fn vocab_of(words: &[&str]) -> Vocabulary {
        Vocabulary::from_counts(
            words.iter().map(|s| (s.to_string(), 100)),
            1,
            TokenizeConfig::default().rules_hash(),
        )
    }

    fn count(
        words: &[&str],
        boundaries: Vec<usize>,
        vocab: &Vocabulary,
        window: usize,
        weighting: Weighting,
        oov: OovPolicy,
    ) -> CooccurrenceMatrix {
        count_cooccurrences(&stream_of(words, boundaries), vocab, window, weighting, oov).unwrap()
    }

    #[test]
    fn harmonic_window_two() {
        let v = vocab_of(&["a", "b", "c"]);
        let m = count(
            &["a", "b", "c"],
            vec![],
            &v,
            2,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        let (a, b, c) = (v.get("a").unwrap(), v.get("b").unwrap(), v.get("c").unwrap());
        assert_eq!(m.get(a as usize, b as usize), 1.0);
        assert_eq!(m.get(b as usize, a as usize), 1.0);
        assert_eq!(m.get(b as usize, c as usize), 1.0);
        assert_eq!(m.get(c as usize, b as usize), 1.0);
        assert_eq!(m.get(a as usize, c as usize), 0.5);
        assert_eq!(m.get(c as usize, a as usize), 0.5);
    }

    #[test]
    fn single_token_gives_zero_matrix() {
        let v = vocab_of(&["a"]);
        let m = count(&["a"], vec![], &v, 2, Weighting::Harmonic, OovPolicy::Delete);
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.total_mass(), 0.0);
    }

    #[test]
    fn repeated_term_window_one() {
        let v = vocab_of(&["a", "b"]);
        let m = count(
            &["a", "b", "a"],
            vec![],
            &v,
            1,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        let (a, b) = (v.get("a").unwrap() as usize, v.get("b").unwrap() as usize);
        assert_eq!(m.get(a, b), 2.0);
        assert_eq!(m.get(b, a), 2.0);
        assert_eq!(m.get(a, a), 0.0);
    }

    #[test]
    fn oov_delete_shrinks_distances() {
        let v = vocab_of(&["a", "b"]);
        // "x" is OOV. Deleting it makes a and b adjacent; holding position
        // keeps them at distance 2.
        let deleted = count(
            &["a", "x", "b"],
            vec![],
            &v,
            1,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        let held = count(
            &["a", "x", "b"],
            vec![],
            &v,
            1,
            Weighting::Harmonic,
            OovPolicy::HoldPosition,
        );
        let (a, b) = (v.get("a").unwrap() as usize, v.get("b").unwrap() as usize);
        assert_eq!(deleted.get(a, b), 1.0);
        assert_eq!(held.get(a, b), 0.0);
    }

    #[test]
    fn windows_do_not_cross_segments() {
        let v = vocab_of(&["a", "b"]);
        let m = count(
            &["a", "b"],
            vec![1],
            &v,
            2,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn self_cooccurrence_is_counted() {
        let v = vocab_of(&["a"]);
        let m = count(
            &["a", "a"],
            vec![],
            &v,
            1,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        assert_eq!(m.get(0, 0), 2.0);
    }

    #[test]
    fn mismatched_rules_hash_is_rejected() {
        let v = Vocabulary::from_counts([("a".to_string(), 1)], 1, 123);
        let s = stream_of(&["a", "a"], vec![]);
        let err =
            count_cooccurrences(&s, &v, 1, Weighting::Harmonic, OovPolicy::Delete).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn uniform_total_mass_formula() {
        // Boundary-free stream of L in-vocabulary tokens:
        // total mass = 2 * (w*L - w*(w+1)/2).
        let v = vocab_of(&["a", "b", "c"]);
        let words: Vec<&str> = ["a", "b", "c"].iter().cycle().take(23).copied().collect();
        for window in 1..=3usize {
            let m = count(&words, vec![], &v, window, Weighting::Uniform, OovPolicy::Delete);
            let l = words.len();
            let expected = 2.0 * (window * l - window * (window + 1) / 2) as f64;
            assert_eq!(m.total_mass(), expected, "window {window}");
        }
    }

    #[test]
    fn triplet_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.tsv");
        let v = vocab_of(&["a", "b", "c"]);
        let m = count(
            &["a", "b", "c", "a"],
            vec![],
            &v,
            2,
            Weighting::Harmonic,
            OovPolicy::Delete,
        );
        m.write_tsv(&path).unwrap();
        let back = CooccurrenceMatrix::read_tsv(&path).unwrap();
        assert_eq!(back.dim(), m.dim());
        assert_eq!(back.matrix(), m.matrix());
    }
}
