//! k-nearest-neighbour probe comparing raw bag-of-words vectors with the
//! learned representation on labeled documents.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{tokenize, vectorize, Corpus, TokenizerConfig, Vocabulary};
use crate::error::{DcotError, Result};
use crate::oracle::rng_for;
use crate::stack::DcotModel;
use crate::vector::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn distance(&self, a: &SparseVector, b: &SparseVector) -> f64 {
        match self {
            Metric::Cosine => a.cosine_distance(b),
            Metric::Euclidean => a.euclidean(b),
        }
    }
}

impl FromStr for Metric {
    type Err = DcotError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(DcotError::InvalidConfig(format!("unknown metric {other:?}"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

/// Documents with labels for a prefix of them; the unlabeled tail is
/// allowed but not evaluated.
#[derive(Debug, Clone)]
pub struct LabeledCorpus {
    pub corpus: Corpus,
    pub labels: Vec<String>,
}

impl LabeledCorpus {
    pub fn new(corpus: Corpus, labels: Vec<String>) -> Result<Self> {
        if labels.len() > corpus.n() {
            return Err(DcotError::LengthMismatch {
                left: labels.len(),
                right: corpus.n(),
            });
        }
        Ok(LabeledCorpus { corpus, labels })
    }

    /// Parses `label<TAB>text` lines. Lines without a tab are unlabeled
    /// documents and may only follow the labeled ones.
    pub fn from_lines<S: AsRef<str>>(lines: &[S], vocab: &Vocabulary, config: &TokenizerConfig) -> Result<Self> {
        let mut labels = Vec::new();
        let mut docs = Vec::with_capacity(lines.len());
        for (no, line) in lines.iter().enumerate() {
            let line = line.as_ref();
            let text = match line.split_once('\t') {
                Some((label, text)) => {
                    if labels.len() != docs.len() {
                        return Err(DcotError::InvalidConfig(format!(
                            "line {}: labeled document after an unlabeled one",
                            no + 1
                        )));
                    }
                    labels.push(label.trim().to_string());
                    text
                }
                None => line,
            };
            docs.push(vectorize(&tokenize(text, config), vocab));
        }
        let corpus = Corpus::new(vocab.len(), docs)?;
        Self::new(corpus, labels)
    }

    pub fn labeled_docs(&self) -> &[crate::corpus::SbowVector] {
        &self.corpus.docs()[..self.labels.len()]
    }
}

/// Majority vote among the `k` nearest training vectors.
///
/// Neighbours are ranked by distance, then label, which makes the result
/// independent of training order. Vote ties go to the label with the
/// smaller summed distance, then to the lexicographically smaller label.
pub fn knn_classify(
    train: &[SparseVector],
    train_labels: &[String],
    queries: &[SparseVector],
    k: usize,
    metric: Metric,
) -> Result<Vec<String>> {
    if train.is_empty() {
        return Err(DcotError::EmptyTrainingSet);
    }
    if train.len() != train_labels.len() {
        return Err(DcotError::LengthMismatch {
            left: train.len(),
            right: train_labels.len(),
        });
    }
    if k == 0 || k > train.len() {
        return Err(DcotError::InvalidK { k, n: train.len() });
    }
    let dim = train[0].dim();
    if let Some(v) = train.iter().chain(queries).find(|v| v.dim() != dim) {
        return Err(DcotError::DimensionMismatch {
            expected: dim,
            found: v.dim(),
        });
    }
    Ok(queries
        .par_iter()
        .map(|q| {
            let mut ranked: Vec<(f64, &str)> = train
                .iter()
                .zip(train_labels)
                .map(|(t, l)| (metric.distance(q, t), l.as_str()))
                .collect();
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            let mut votes: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
            for &(dist, label) in &ranked[..k] {
                let v = votes.entry(label).or_insert((0, 0.0));
                v.0 += 1;
                v.1 += dist;
            }
            votes
                .into_iter()
                .min_by(|a, b| {
                    b.1 .0
                        .cmp(&a.1 .0)
                        .then_with(|| a.1 .1.total_cmp(&b.1 .1))
                        .then_with(|| a.0.cmp(b.0))
                })
                .map(|(label, _)| label.to_string())
                .expect("k >= 1 neighbours")
        })
        .collect())
}

pub fn accuracy(predicted: &[String], truth: &[String]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(DcotError::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(DcotError::InvalidConfig("accuracy of an empty prediction list".into()));
    }
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / predicted.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub label: String,
    pub support: usize,
    pub sbow_accuracy: f64,
    pub dcot_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub sbow_accuracy: f64,
    pub dcot_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub k: usize,
    pub metric: Metric,
    pub split_seed: u64,
    pub per_class: Vec<ClassReport>,
}

impl EvalReport {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sbow_accuracy: {:.6}", self.sbow_accuracy);
        let _ = writeln!(s, "dcot_accuracy: {:.6}", self.dcot_accuracy);
        let _ = writeln!(s, "n_train: {}", self.n_train);
        let _ = writeln!(s, "n_test: {}", self.n_test);
        let _ = writeln!(s, "k: {}", self.k);
        let _ = writeln!(s, "metric: {}", self.metric);
        let _ = writeln!(s, "split_seed: {}", self.split_seed);
        for c in &self.per_class {
            let _ = writeln!(
                s,
                "class.{}: support={} sbow_accuracy={:.6} dcot_accuracy={:.6}",
                c.label, c.support, c.sbow_accuracy, c.dcot_accuracy
            );
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Stratified 80/20 split of `labels` by seed: `(train, test)` index lists.
pub fn stratified_split(labels: &[String], seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(i);
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (ordinal, members) in by_class.values_mut().enumerate() {
        members.shuffle(&mut rng_for(seed, ordinal as u64));
        let n = members.len();
        let n_test = ((n as f64 * 0.2).round() as usize).min(n.saturating_sub(1));
        test.extend_from_slice(&members[..n_test]);
        train.extend_from_slice(&members[n_test..]);
    }
    if test.is_empty() {
        return Err(DcotError::InsufficientLabels(
            "no class is large enough to hold out a test document".into(),
        ));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Scores two representations of the same labeled documents on one split.
pub fn compare_vectors(
    labels: &[String],
    sbow: &[SparseVector],
    dcot: &[SparseVector],
    split_seed: u64,
    k: usize,
    metric: Metric,
) -> Result<EvalReport> {
    if labels.len() < 4 {
        return Err(DcotError::InsufficientLabels(format!(
            "need at least 4 labeled documents, got {}",
            labels.len()
        )));
    }
    if sbow.len() != labels.len() || dcot.len() != labels.len() {
        return Err(DcotError::LengthMismatch {
            left: labels.len(),
            right: sbow.len().min(dcot.len()),
        });
    }
    let (train, test) = stratified_split(labels, split_seed)?;
    let k = k.min(train.len());
    let pick = |v: &[SparseVector], idx: &[usize]| idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let train_labels: Vec<String> = train.iter().map(|&i| labels[i].clone()).collect();
    let truth: Vec<String> = test.iter().map(|&i| labels[i].clone()).collect();

    let pred_sbow = knn_classify(&pick(sbow, &train), &train_labels, &pick(sbow, &test), k, metric)?;
    let pred_dcot = knn_classify(&pick(dcot, &train), &train_labels, &pick(dcot, &test), k, metric)?;

    let mut classes: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for ((t, a), b) in truth.iter().zip(&pred_sbow).zip(&pred_dcot) {
        let c = classes.entry(t.as_str()).or_default();
        c.0 += 1;
        c.1 += (a == t) as usize;
        c.2 += (b == t) as usize;
    }
    let per_class = classes
        .into_iter()
        .map(|(label, (n, a, b))| ClassReport {
            label: label.to_string(),
            support: n,
            sbow_accuracy: a as f64 / n as f64,
            dcot_accuracy: b as f64 / n as f64,
        })
        .collect();

    Ok(EvalReport {
        sbow_accuracy: accuracy(&pred_sbow, &truth)?,
        dcot_accuracy: accuracy(&pred_dcot, &truth)?,
        n_train: train.len(),
        n_test: test.len(),
        k,
        metric,
        split_seed,
        per_class,
    })
}

/// kNN on raw counts versus kNN on the flattened model output.
pub fn compare_representations(
    labeled: &LabeledCorpus,
    model: &DcotModel,
    split_seed: u64,
    k: usize,
    metric: Metric,
) -> Result<EvalReport> {
    if labeled.corpus.dim() != model.d() {
        return Err(DcotError::DimensionMismatch {
            expected: model.d(),
            found: labeled.corpus.dim(),
        });
    }
    let docs = labeled.labeled_docs();
    let sbow: Vec<SparseVector> = docs.iter().map(|x| x.to_sparse()).collect();
    let dcot: Vec<SparseVector> = docs
        .iter()
        .map(|x| model.transform(x).map(|rep| rep.flatten()))
        .collect::<Result<_>>()?;
    compare_vectors(&labeled.labels, &sbow, &dcot, split_seed, k, metric)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn dv(v: &[f64]) -> SparseVector {
        SparseVector::from_dense(v)
    }

    #[test]
    fn exact_match_wins_at_k1() {
        let train = vec![dv(&[1.0, 0.0]), dv(&[0.0, 1.0]), dv(&[1.0, 1.0])];
        let labels = s(&["a", "b", "c"]);
        for metric in [Metric::Cosine, Metric::Euclidean] {
            let out = knn_classify(&train, &labels, &[dv(&[0.0, 1.0])], 1, metric).unwrap();
            assert_eq!(out, s(&["b"]));
        }
    }

    #[test]
    fn unanimity_at_k_equals_n() {
        let train = vec![dv(&[1.0, 0.0]), dv(&[0.0, 1.0]), dv(&[5.0, 1.0])];
        let labels = s(&["x", "x", "x"]);
        let out = knn_classify(&train, &labels, &[dv(&[-3.0, 2.0])], 3, Metric::Cosine).unwrap();
        assert_eq!(out, s(&["x"]));
    }

    #[test]
    fn disjoint_support_clusters() {
        // Class a lives on coordinates 0..3, class b on 3..6; cosine between
        // classes is exactly zero.
        let mut train = Vec::new();
        let mut labels = Vec::new();
        for i in 0..6 {
            let mut v = vec![0.0; 6];
            v[i % 3] = 1.0 + i as f64;
            v[(i + 1) % 3] = 2.0;
            train.push(dv(&v));
            labels.push("a".to_string());
            let mut w = vec![0.0; 6];
            w[3 + i % 3] = 1.0 + i as f64;
            w[3 + (i + 2) % 3] = 0.5;
            train.push(dv(&w));
            labels.push("b".to_string());
        }
        let queries = vec![dv(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), dv(&[0.0, 0.0, 0.0, 0.0, 3.0, 1.0])];
        let out = knn_classify(&train, &labels, &queries, 3, Metric::Cosine).unwrap();
        assert_eq!(accuracy(&out, &s(&["a", "b"])).unwrap(), 1.0);
    }

    #[test]
    fn vote_ties_use_summed_distance_then_label() {
        let train = vec![dv(&[1.0]), dv(&[4.0])];
        let out = knn_classify(&train, &s(&["far", "near"]), &[dv(&[3.0])], 2, Metric::Euclidean).unwrap();
        assert_eq!(out, s(&["near"]));
        let out = knn_classify(&train, &s(&["z", "y"]), &[dv(&[2.5])], 2, Metric::Euclidean).unwrap();
        assert_eq!(out, s(&["y"]));
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(
            knn_classify(&[], &[], &[dv(&[1.0])], 1, Metric::Cosine),
            Err(DcotError::EmptyTrainingSet)
        ));
        assert!(matches!(
            knn_classify(&[dv(&[1.0])], &s(&["a"]), &[dv(&[1.0])], 2, Metric::Cosine),
            Err(DcotError::InvalidK { k: 2, n: 1 })
        ));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&s(&["a", "b"]), &s(&["a", "b"])).unwrap(), 1.0);
        assert_eq!(accuracy(&s(&["a", "b"]), &s(&["c", "d"])).unwrap(), 0.0);
        assert_eq!(accuracy(&s(&["a", "b", "c", "d"]), &s(&["a", "b", "c", "x"])).unwrap(), 0.75);
        assert!(matches!(accuracy(&s(&["a"]), &s(&[])), Err(DcotError::LengthMismatch { .. })));
    }

    #[test]
    fn identical_arms_score_equal() {
        let labels = s(&["a", "a", "a", "b", "b", "b", "a", "b", "a", "b"]);
        let vecs: Vec<SparseVector> = (0..10).map(|i| dv(&[i as f64, (10 - i) as f64])).collect();
        let r = compare_vectors(&labels, &vecs, &vecs, 3, 3, Metric::Euclidean).unwrap();
        assert_eq!(r.sbow_accuracy, r.dcot_accuracy);
        assert_eq!(r.n_train + r.n_test, 10);
    }

    #[test]
    fn single_class_is_perfect() {
        let labels = s(&["only"; 6]);
        let vecs: Vec<SparseVector> = (0..6).map(|i| dv(&[i as f64, 1.0])).collect();
        let r = compare_vectors(&labels, &vecs, &vecs, 0, 3, Metric::Cosine).unwrap();
        assert_eq!((r.sbow_accuracy, r.dcot_accuracy), (1.0, 1.0));
    }

    #[test]
    fn too_few_labels() {
        let labels = s(&["a", "b", "a"]);
        let vecs: Vec<SparseVector> = (0..3).map(|i| dv(&[i as f64])).collect();
        assert!(matches!(
            compare_vectors(&labels, &vecs, &vecs, 0, 1, Metric::Cosine),
            Err(DcotError::InsufficientLabels(_))
        ));
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<String> = (0..20).map(|i| if i % 4 == 0 { "a" } else { "b" }.to_string()).collect();
        let (train, test) = stratified_split(&labels, 11).unwrap();
        assert_eq!(test.len(), 4);
        assert_eq!(test.iter().filter(|&&i| labels[i] == "a").count(), 1);
        assert_eq!(train.len(), 16);
        assert_eq!(stratified_split(&labels, 11).unwrap(), (train, test));
    }

    #[test]
    fn labeled_lines_parse() {
        let vocab = Vocabulary::from_parts(s(&["food", "good"]), vec![3, 1]).unwrap();
        let lines = ["pos\tgood food", "neg\tbad", "food food"];
        let lc = LabeledCorpus::from_lines(&lines, &vocab, &TokenizerConfig::default()).unwrap();
        assert_eq!(lc.labels, s(&["pos", "neg"]));
        assert_eq!(lc.corpus.n(), 3);
        let bad = ["food", "pos\tgood"];
        assert!(LabeledCorpus::from_lines(&bad, &vocab, &TokenizerConfig::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn knn_ignores_training_order(
                pts in prop::collection::vec((0u8..4, 0u8..4, 0usize..3), 3..15),
                q in (0u8..4, 0u8..4),
                k in 1usize..4,
                rot in 0usize..15,
            ) {
                let train: Vec<SparseVector> = pts.iter().map(|&(a, b, _)| dv(&[a as f64, b as f64])).collect();
                let labels: Vec<String> = pts.iter().map(|&(_, _, l)| format!("c{l}")).collect();
                let k = k.min(train.len());
                let query = [dv(&[q.0 as f64, q.1 as f64])];
                let base = knn_classify(&train, &labels, &query, k, Metric::Euclidean).unwrap();
                let mut t2 = train.clone();
                let mut l2 = labels.clone();
                let shift = rot % train.len();
                t2.rotate_left(shift);
                l2.rotate_left(shift);
                t2.reverse();
                l2.reverse();
                prop_assert_eq!(base, knn_classify(&t2, &l2, &query, k, Metric::Euclidean).unwrap());
            }
        }
    }
}
