//! Tokenization and frequency-thresholded vocabularies.
//!
//! Whitespace is the sole token delimiter; the strip rules delete characters
//! inside tokens (so `"a,b"` becomes `ab`, not two tokens). Tokens that
//! become empty after stripping are dropped.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::exec;
use crate::fingerprint::digest_u64;

/// Chunk size (bytes or lines) for parallel tokenization. Fixed so output
/// does not depend on thread count.
const TOKENIZE_CHUNK: usize = 1 << 20;
/// Tokens per chunk for parallel counting.
const COUNT_CHUNK: usize = 1 << 18;

/// Character strip and segmentation rules applied before counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizeConfig {
    pub lowercase: bool,
    /// Delete ASCII punctuation characters inside tokens.
    pub strip_punct: bool,
    /// Delete ASCII digit characters inside tokens.
    pub strip_digits: bool,
    /// Record a segment boundary at every line break; context windows never
    /// cross segment boundaries.
    pub segment_lines: bool,
}

impl Default for TokenizeConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punct: true,
            strip_digits: true,
            segment_lines: false,
        }
    }
}

impl TokenizeConfig {
    /// Stable fingerprint of the rules, carried through streams and
    /// vocabularies so mismatched preprocessing is caught early.
    pub fn rules_hash(&self) -> u64 {
        let flags = [
            self.lowercase as u8,
            self.strip_punct as u8,
            self.strip_digits as u8,
            self.segment_lines as u8,
        ];
        digest_u64([b"tokenize-rules-v1".as_slice(), &flags])
    }

    fn normalize(&self, raw: &str) -> Option<String> {
        let lowered;
        let s = if self.lowercase {
            lowered = raw.to_lowercase();
            &lowered
        } else {
            raw
        };
        let token: String = s
            .chars()
            .filter(|c| {
                !(self.strip_punct && c.is_ascii_punctuation())
                    && !(self.strip_digits && c.is_ascii_digit())
            })
            .collect();
        (!token.is_empty()).then_some(token)
    }
}

/// An ordered token sequence with optional segment boundaries.
///
/// `boundaries` holds the start index of every segment except the first,
/// strictly increasing and strictly inside `0..tokens.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    tokens: Vec<String>,
    boundaries: Vec<usize>,
    rules_hash: u64,
}

impl TokenStream {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn rules_hash(&self) -> u64 {
        self.rules_hash
    }

    /// Segment id per token; all zeros when there are no boundaries.
    pub fn segment_ids(&self) -> Vec<u32> {
        let mut ids = vec![0u32; self.tokens.len()];
        let mut seg = 0u32;
        let mut next = self.boundaries.iter().copied().peekable();
        for (t, id) in ids.iter_mut().enumerate() {
            if next.peek() == Some(&t) {
                seg += 1;
                next.next();
            }
            *id = seg;
        }
        ids
    }

    /// Test/construction helper with explicit tokens and boundaries.
    pub fn from_parts(tokens: Vec<String>, boundaries: Vec<usize>, rules_hash: u64) -> Self {
        debug_assert!(boundaries.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(boundaries.iter().all(|&b| b > 0 && b < tokens.len()));
        Self {
            tokens,
            boundaries,
            rules_hash,
        }
    }
}

/// Tokenizes raw bytes. Input must be valid UTF-8; the error names the first
/// undecodable byte offset.
pub fn tokenize(raw: &[u8], config: &TokenizeConfig) -> Result<TokenStream> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Decode {
        offset: e.valid_up_to(),
    })?;
    let rules_hash = config.rules_hash();
    if config.segment_lines {
        let lines: Vec<&str> = text.lines().collect();
        let per_line: Vec<Vec<String>> = {
            let ranges = exec::chunk_ranges(lines.len(), TOKENIZE_CHUNK / 64);
            let chunks: Vec<Vec<Vec<String>>> = exec::map_collect(ranges.len(), |c| {
                lines[ranges[c].clone()]
                    .iter()
                    .map(|line| {
                        line.split_whitespace()
                            .filter_map(|t| config.normalize(t))
                            .collect()
                    })
                    .collect()
            });
            chunks.into_iter().flatten().collect()
        };
        let mut tokens = Vec::new();
        let mut boundaries = Vec::new();
        for line_tokens in per_line {
            if line_tokens.is_empty() {
                continue;
            }
            if !tokens.is_empty() {
                boundaries.push(tokens.len());
            }
            tokens.extend(line_tokens);
        }
        Ok(TokenStream {
            tokens,
            boundaries,
            rules_hash,
        })
    } else {
        let ranges = whitespace_aligned_ranges(text, TOKENIZE_CHUNK);
        let chunks: Vec<Vec<String>> = exec::map_collect(ranges.len(), |c| {
            text[ranges[c].clone()]
                .split_whitespace()
                .filter_map(|t| config.normalize(t))
                .collect()
        });
        Ok(TokenStream {
            tokens: chunks.into_iter().flatten().collect(),
            boundaries: Vec::new(),
            rules_hash,
        })
    }
}

/// Splits `text` into byte ranges of roughly `target` bytes, moving each cut
/// forward to the next whitespace so no token straddles two ranges.
fn whitespace_aligned_ranges(text: &str, target: usize) -> Vec<std::ops::Range<usize>> {
    let bytes = text.as_bytes();
    let mut ranges = Vec::new();
    let mut start = 0usize;
    while start < bytes.len() {
        let mut end = (start + target).min(bytes.len());
        while end < bytes.len() && !bytes[end].is_ascii_whitespace() {
            end += 1;
        }
        ranges.push(start..end);
        start = end;
    }
    ranges
}

/// Ordered list of distinct terms with counts; terms sorted by descending
/// frequency, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    rules_hash: u64,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn term(&self, i: usize) -> &str {
        &self.terms[i]
    }

    pub fn get(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.index.contains_key(term)
    }

    pub fn rules_hash(&self) -> u64 {
        self.rules_hash
    }

    /// Fingerprint over terms, counts, and preprocessing rules.
    pub fn fingerprint(&self) -> u64 {
        let count_bytes: Vec<[u8; 8]> = self.counts.iter().map(|c| c.to_le_bytes()).collect();
        let rules = self.rules_hash.to_le_bytes();
        digest_u64(
            std::iter::once(rules.as_slice())
                .chain(self.terms.iter().map(|t| t.as_bytes()))
                .chain(count_bytes.iter().map(|b| b.as_slice())),
        )
    }

    /// Builds directly from term counts (canonical order applied).
    pub fn from_counts(
        counts: impl IntoIterator<Item = (String, u64)>,
        min_count: u64,
        rules_hash: u64,
    ) -> Self {
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut terms = Vec::with_capacity(entries.len());
        let mut tallies = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, (term, count)) in entries.into_iter().enumerate() {
            index.insert(term.clone(), pos as u32);
            terms.push(term);
            tallies.push(count);
        }
        Self {
            terms,
            counts: tallies,
            index,
            rules_hash,
        }
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (term, count) in self.terms.iter().zip(&self.counts) {
            writeln!(w, "{term}\t{count}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `term<TAB>count` file. The file format does not carry the
    /// preprocessing rules, so the caller declares them.
    pub fn read_tsv(path: &Path, config: &TokenizeConfig) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (term, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: "expected term<TAB>count".into(),
            })?;
            let count: u64 = count.trim().parse().map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: format!("bad count {count:?}: {e}"),
            })?;
            entries.push((term.to_string(), count));
        }
        Ok(Self::from_counts(entries, 1, config.rules_hash()))
    }
}

/// Counts term frequencies and keeps every term occurring at least
/// `min_count` times.
pub fn build_vocabulary(stream: &TokenStream, min_count: u64) -> Result<Vocabulary> {
    if min_count < 1 {
        return Err(Error::InvalidParameter("min_count must be >= 1".into()));
    }
    let ranges = exec::chunk_ranges(stream.len(), COUNT_CHUNK);
    let partials: Vec<HashMap<&str, u64>> = exec::map_collect(ranges.len(), |c| {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for token in &stream.tokens()[ranges[c].clone()] {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
        counts
    });
    let mut merged: HashMap<&str, u64> = HashMap::new();
    for partial in partials {
        for (term, count) in partial {
            *merged.entry(term).or_insert(0) += count;
        }
    }
    Ok(Vocabulary::from_counts(
        merged.into_iter().map(|(t, c)| (t.to_string(), c)),
        min_count,
        stream.rules_hash(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> TokenizeConfig {
        TokenizeConfig::default()
    }

    #[test]
    fn tokenize_lowercases_and_strips() {
        let s = tokenize(b"The Cat, the cat.", &cfg()).unwrap();
        assert_eq!(s.tokens(), ["the", "cat", "the", "cat"]);
    }

    #[test]
    fn tokenize_empty_input() {
        let s = tokenize(b"", &cfg()).unwrap();
        assert!(s.is_empty());
        assert!(s.boundaries().is_empty());
    }

    #[test]
    fn tokenize_strips_digits_inside_tokens() {
        let s = tokenize(b"a1 b2c 3", &cfg()).unwrap();
        assert_eq!(s.tokens(), ["a", "bc"]);
    }

    #[test]
    fn tokenize_reports_decode_offset() {
        let err = tokenize(&[b'a', b' ', 0xff, b'b'], &cfg()).unwrap_err();
        match err {
            Error::Decode { offset } => assert_eq!(offset, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn segment_boundaries_at_line_breaks() {
        let config = TokenizeConfig {
            segment_lines: true,
            ..cfg()
        };
        let s = tokenize(b"a b\n\nc\nd e", &config).unwrap();
        assert_eq!(s.tokens(), ["a", "b", "c", "d", "e"]);
        assert_eq!(s.boundaries(), [2, 3]);
        assert_eq!(s.segment_ids(), [0, 0, 1, 2, 2]);
    }

    #[test]
    fn vocabulary_counts_and_threshold() {
        let tokens = ["a", "a", "a", "b", "b", "c"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let stream = TokenStream::from_parts(tokens, vec![], cfg().rules_hash());
        let v = build_vocabulary(&stream, 2).unwrap();
        assert_eq!(v.terms(), ["a", "b"]);
        assert_eq!(v.counts(), [3, 2]);
        assert_eq!(v.get("a"), Some(0));
        assert_eq!(v.get("c"), None);
    }

    #[test]
    fn vocabulary_empty_stream() {
        let stream = TokenStream::from_parts(vec![], vec![], 0);
        let v = build_vocabulary(&stream, 1).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn vocabulary_order_is_frequency_then_lexicographic() {
        let tokens = ["z", "z", "m", "m", "a"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let stream = TokenStream::from_parts(tokens, vec![], 0);
        let v = build_vocabulary(&stream, 1).unwrap();
        assert_eq!(v.terms(), ["m", "z", "a"]);
    }

    #[test]
    fn vocabulary_tsv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let tokens = ["b", "b", "a"].iter().map(|s| s.to_string()).collect();
        let stream = TokenStream::from_parts(tokens, vec![], cfg().rules_hash());
        let v = build_vocabulary(&stream, 1).unwrap();
        v.write_tsv(&path).unwrap();
        let back = Vocabulary::read_tsv(&path, &cfg()).unwrap();
        assert_eq!(v, back);
    }
}
