//! Text ingestion: tokenization, the term dictionary, sparse count vectors
//! and prototype selection.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::error::{DcotError, Result};
use crate::vector::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub lowercase: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig { lowercase: true }
    }
}

/// Splits `text` on runs of non-alphanumeric characters, dropping empty tokens.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

/// The term dictionary. Terms are kept in descending count order with ties
/// broken lexicographically, so position 0 is the most frequent term.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from stored parts, checking uniqueness and counts.
    pub fn from_parts(terms: Vec<String>, counts: Vec<u64>) -> Result<Self> {
        if terms.len() != counts.len() {
            return Err(DcotError::LengthMismatch {
                left: terms.len(),
                right: counts.len(),
            });
        }
        if terms.is_empty() {
            return Err(DcotError::EmptyVocabulary { min_count: 1 });
        }
        if let Some(pos) = counts.iter().position(|&c| c == 0) {
            return Err(DcotError::InvariantViolation(format!(
                "term {:?} has a zero count",
                terms[pos]
            )));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (i, t) in terms.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(DcotError::InvariantViolation(format!(
                    "duplicate term {t:?}"
                )));
            }
        }
        Ok(Vocabulary {
            terms,
            counts,
            index,
        })
    }

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

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    fn frequency_order(&self, a: usize, b: usize) -> Ordering {
        self.counts[b]
            .cmp(&self.counts[a])
            .then_with(|| self.terms[a].cmp(&self.terms[b]))
    }
}

/// Counts every token across `token_docs` and keeps those seen at least
/// `min_count` times.
pub fn build_vocabulary<S: AsRef<str>>(token_docs: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(DcotError::InvalidConfig("min_count must be at least 1".into()));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for doc in token_docs {
        for tok in doc {
            *counts.entry(tok.as_ref()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    if kept.is_empty() {
        return Err(DcotError::EmptyVocabulary { min_count });
    }
    kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (terms, counts) = kept.into_iter().map(|(t, c)| (t.to_string(), c)).unzip();
    Vocabulary::from_parts(terms, counts)
}

/// A document as raw term counts in canonical sparse form: strictly
/// increasing indices, no zero values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SbowVector {
    dim: usize,
    entries: Vec<(usize, u32)>,
}

impl SbowVector {
    pub fn empty(dim: usize) -> Self {
        SbowVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from arbitrary `(index, count)` pairs. Duplicate
    /// indices are summed and zero counts dropped.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut entries: Vec<(usize, u32)> = Vec::new();
        for (i, c) in pairs {
            if i >= dim {
                return Err(DcotError::IndexOutOfRange { index: i, dim });
            }
            entries.push((i, c));
        }
        entries.sort_unstable_by_key(|e| e.0);
        let mut merged: Vec<(usize, u32)> = Vec::with_capacity(entries.len());
        for (i, c) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += c,
                _ => merged.push((i, c)),
            }
        }
        merged.retain(|e| e.1 > 0);
        Ok(SbowVector {
            dim,
            entries: merged,
        })
    }

    /// Dense counts, e.g. `[1, 2]` for a two-term document.
    pub fn from_dense(counts: &[u32]) -> Self {
        let entries = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
            .collect();
        SbowVector {
            dim: counts.len(),
            entries,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.1 as u64).sum()
    }

    pub fn get(&self, index: usize) -> u32 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, c) in &self.entries {
            out[i] = c as f64;
        }
        out
    }

    pub fn to_sparse(&self) -> SparseVector {
        SparseVector::from_sorted_unchecked(
            self.dim,
            self.entries.iter().map(|&(i, c)| (i, c as f64)).collect(),
        )
    }

    /// Keeps the entries for which `keep` returns true, preserving order.
    pub(crate) fn filtered(&self, mut keep: impl FnMut(usize, u32) -> bool) -> SbowVector {
        SbowVector {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|&(i, c)| keep(i, c))
                .collect(),
        }
    }
}

/// Counts in-vocabulary tokens; unknown tokens are dropped.
pub fn vectorize<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> SbowVector {
    let mut counts: HashMap<usize, u32> = HashMap::new();
    for tok in tokens {
        if let Some(i) = vocab.index_of(tok.as_ref()) {
            *counts.entry(i).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(usize, u32)> = counts.into_iter().collect();
    entries.sort_unstable_by_key(|e| e.0);
    SbowVector {
        dim: vocab.len(),
        entries,
    }
}

/// Ordered indices of the prototype terms, the output coordinates of the
/// first encoder layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrototypeSet {
    indices: Vec<usize>,
}

impl PrototypeSet {
    /// Checks `0 < r < dim` and that the indices are distinct and in range.
    pub fn new(indices: Vec<usize>, dim: usize) -> Result<Self> {
        let r = indices.len();
        if r == 0 || r >= dim {
            return Err(DcotError::InvalidPrototypeCount { r, d: dim });
        }
        let mut seen = vec![false; dim];
        for &i in &indices {
            if i >= dim {
                return Err(DcotError::IndexOutOfRange { index: i, dim });
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(DcotError::InvariantViolation(format!(
                    "prototype index {i} repeated"
                )));
            }
        }
        Ok(PrototypeSet { indices })
    }

    /// Every coordinate of an `r`-dimensional space, in order. Used to train
    /// the stacked layers, which reconstruct all of their inputs.
    pub fn identity(r: usize) -> Self {
        PrototypeSet {
            indices: (0..r).collect(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Picks the `r` most frequent terms (ties broken lexicographically).
pub fn select_prototypes(vocab: &Vocabulary, r: usize) -> Result<PrototypeSet> {
    let d = vocab.len();
    if r == 0 || r >= d {
        return Err(DcotError::InvalidPrototypeCount { r, d });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| vocab.frequency_order(a, b));
    order.truncate(r);
    PrototypeSet::new(order, d)
}

/// A set of documents over one shared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    docs: Vec<SbowVector>,
}

impl Corpus {
    pub fn new(dim: usize, docs: Vec<SbowVector>) -> Result<Self> {
        if let Some(bad) = docs.iter().find(|d| d.dim() != dim) {
            return Err(DcotError::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        Ok(Corpus { dim, docs })
    }

    /// Tokenizes and vectorizes each text against `vocab`.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], vocab: &Vocabulary, config: &TokenizerConfig) -> Self {
        let docs = texts
            .iter()
            .map(|t| vectorize(&tokenize(t.as_ref(), config), vocab))
            .collect();
        Corpus {
            dim: vocab.len(),
            docs,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn docs(&self) -> &[SbowVector] {
        &self.docs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn tokenize_examples() {
        let cfg = TokenizerConfig::default();
        assert_eq!(tokenize("Good food, FOOD!", &cfg), toks(&["good", "food", "food"]));
        assert!(tokenize("", &cfg).is_empty());
        assert_eq!(tokenize("a1-b2", &cfg), toks(&["a1", "b2"]));
        let keep_case = TokenizerConfig { lowercase: false };
        assert_eq!(tokenize("Good food", &keep_case), toks(&["Good", "food"]));
    }

    #[test]
    fn vocabulary_counts_and_order() {
        let v = build_vocabulary(&[toks(&["good", "food", "food"]), toks(&["food"])], 1).unwrap();
        assert_eq!(v.terms(), &toks(&["food", "good"])[..]);
        assert_eq!(v.counts(), &[3, 1]);
        assert_eq!(v.index_of("good"), Some(1));

        let tie = build_vocabulary(&[toks(&["b", "a"]), toks(&["a", "b"])], 1).unwrap();
        assert_eq!(tie.terms(), &toks(&["a", "b"])[..]);
    }

    #[test]
    fn vocabulary_threshold() {
        assert!(matches!(
            build_vocabulary(&[toks(&["a"])], 2),
            Err(DcotError::EmptyVocabulary { min_count: 2 })
        ));
        let empty: Vec<Vec<String>> = vec![];
        assert!(matches!(
            build_vocabulary(&empty, 1),
            Err(DcotError::EmptyVocabulary { .. })
        ));
        let v = build_vocabulary(&[toks(&["a", "a", "b"])], 2).unwrap();
        assert_eq!(v.terms(), &toks(&["a"])[..]);
    }

    #[test]
    fn vectorize_examples() {
        let v = build_vocabulary(&[toks(&["good", "food", "food"])], 1).unwrap();
        let x = vectorize(&toks(&["good", "food", "food"]), &v);
        assert_eq!(x.entries(), &[(0, 2), (1, 1)]);
        assert_eq!(x.dim(), 2);
        assert_eq!(vectorize(&toks(&["zzz"]), &v), SbowVector::empty(2));
        assert_eq!(vectorize::<String>(&[], &v), SbowVector::empty(2));
    }

    #[test]
    fn prototype_selection() {
        let v = Vocabulary::from_parts(toks(&["food", "good"]), vec![3, 1]).unwrap();
        assert_eq!(select_prototypes(&v, 1).unwrap().indices(), &[0]);

        let v5 = Vocabulary::from_parts(toks(&["a", "b", "c", "d", "e"]), vec![5, 4, 3, 2, 1]).unwrap();
        assert!(matches!(
            select_prototypes(&v5, 5),
            Err(DcotError::InvalidPrototypeCount { r: 5, d: 5 })
        ));
        assert!(matches!(
            select_prototypes(&v5, 0),
            Err(DcotError::InvalidPrototypeCount { .. })
        ));

        // Stored out of frequency order on purpose.
        let v = Vocabulary::from_parts(toks(&["c", "b", "a"]), vec![1, 2, 2]).unwrap();
        let p = select_prototypes(&v, 2).unwrap();
        let names: Vec<_> = p.indices().iter().map(|&i| v.term(i).unwrap()).collect();
        assert_eq!(names, ["a", "b"]);
    }

    #[test]
    fn from_parts_rejects_duplicates() {
        assert!(Vocabulary::from_parts(toks(&["a", "a"]), vec![1, 1]).is_err());
        assert!(Vocabulary::from_parts(toks(&["a"]), vec![0]).is_err());
    }

    #[test]
    fn sbow_from_pairs_is_canonical() {
        let x = SbowVector::from_pairs(4, [(3, 1), (0, 2), (3, 2), (1, 0)]).unwrap();
        assert_eq!(x.entries(), &[(0, 2), (3, 3)]);
        assert!(SbowVector::from_pairs(2, [(2, 1)]).is_err());
    }

    #[test]
    fn corpus_rejects_mixed_dims() {
        let err = Corpus::new(2, vec![SbowVector::empty(2), SbowVector::empty(3)]);
        assert!(matches!(err, Err(DcotError::DimensionMismatch { .. })));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word() -> impl Strategy<Value = String> {
            "[a-e]{1,2}"
        }

        proptest! {
            #[test]
            fn vectorize_is_deterministic_and_counts_in_vocab_tokens(
                train in prop::collection::vec(prop::collection::vec(word(), 0..8), 1..6),
                doc in prop::collection::vec(word(), 0..12),
            ) {
                prop_assume!(train.iter().any(|d| !d.is_empty()));
                let v = build_vocabulary(&train, 1).unwrap();
                let text = doc.join(" ");
                let cfg = TokenizerConfig::default();
                let a = vectorize(&tokenize(&text, &cfg), &v);
                let b = vectorize(&tokenize(&text, &cfg), &v);
                prop_assert_eq!(&a, &b);
                let in_vocab = doc.iter().filter(|t| v.index_of(t).is_some()).count() as u64;
                prop_assert_eq!(a.total(), in_vocab);
                prop_assert!(a.entries().windows(2).all(|w| w[0].0 < w[1].0));
            }

            #[test]
            fn prototype_sets_are_nested(
                counts in prop::collection::vec(1u64..6, 3..12),
            ) {
                let terms: Vec<String> = (0..counts.len()).map(|i| format!("t{i:02}")).collect();
                let v = Vocabulary::from_parts(terms, counts.clone()).unwrap();
                for r in 1..counts.len() - 1 {
                    let small = select_prototypes(&v, r).unwrap();
                    let big = select_prototypes(&v, r + 1).unwrap();
                    prop_assert_eq!(small.indices(), &big.indices()[..r]);
                }
            }
        }
    }
}
