//! Seeded synthetic corpora used by `dcot verify`, `dcot synth` and the
//! test suites.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::corpus::{Corpus, PrototypeSet, SbowVector};
use crate::oracle::rng_for;

/// `n` documents over `d` features with counts in `0..=max_count`. Every
/// feature occurs in at least one document.
pub fn random_corpus(n: usize, d: usize, max_count: u32, seed: u64) -> Corpus {
    assert!(n >= 1 && d >= 1 && max_count >= 1);
    let mut rng = rng_for(seed, 0);
    let mut rows: Vec<Vec<u32>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if rng.random_bool(0.5) { rng.random_range(1..=max_count) } else { 0 })
                .collect()
        })
        .collect();
    for j in 0..d {
        if rows.iter().all(|r| r[j] == 0) {
            let i = rng.random_range(0..n);
            rows[i][j] = 1;
        }
    }
    let docs = rows.iter().map(|r| SbowVector::from_dense(r)).collect();
    Corpus::new(d, docs).expect("rows share one dimension")
}

/// The `r` features with the largest total count (ties to the lower index).
pub fn top_features(corpus: &Corpus, r: usize) -> PrototypeSet {
    let mut totals = vec![0u64; corpus.dim()];
    for x in corpus.docs() {
        for &(i, c) in x.entries() {
            totals[i] += c as u64;
        }
    }
    let mut order: Vec<usize> = (0..corpus.dim()).collect();
    order.sort_by(|&a, &b| totals[b].cmp(&totals[a]).then(a.cmp(&b)));
    order.truncate(r);
    PrototypeSet::new(order, corpus.dim()).expect("0 < r < d")
}

/// Shape of the synonym corpus.
///
/// Each topic has one frequent anchor term, a block of frequent context
/// terms and many rare synonyms. An unlabeled document holds either the
/// anchor or one synonym (never both), some of its topic's context and some
/// topic-neutral filler. Labeled documents hold a single synonym plus filler
/// and no context; each labeled document of a topic uses a different
/// synonym, so a held-out document never shares its topical word with a
/// training document.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynonymCorpusConfig {
    pub topics: usize,
    pub context_per_topic: usize,
    pub synonyms_per_topic: usize,
    pub fillers: usize,
    pub unlabeled_per_topic: usize,
    pub labeled_per_topic: usize,
    pub context_per_doc: usize,
    pub fillers_per_doc: usize,
    pub anchor_rate: f64,
}

impl Default for SynonymCorpusConfig {
    fn default() -> Self {
        SynonymCorpusConfig {
            topics: 2,
            context_per_topic: 6,
            synonyms_per_topic: 24,
            fillers: 6,
            unlabeled_per_topic: 300,
            labeled_per_topic: 20,
            context_per_doc: 3,
            fillers_per_doc: 2,
            anchor_rate: 0.5,
        }
    }
}

impl SynonymCorpusConfig {
    pub fn anchor(topic: usize) -> String {
        format!("anchor{topic}")
    }

    pub fn synonym(topic: usize, j: usize) -> String {
        format!("syn{topic}n{j}")
    }

    pub fn context(topic: usize, j: usize) -> String {
        format!("ctx{topic}n{j}")
    }

    pub fn filler(j: usize) -> String {
        format!("fill{j}")
    }

    pub fn label(topic: usize) -> String {
        format!("topic{topic}")
    }

    /// Number of frequent terms: anchors, context and filler.
    pub fn frequent_terms(&self) -> usize {
        self.topics * (1 + self.context_per_topic) + self.fillers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynonymCorpus {
    /// Every document, labeled ones first.
    pub texts: Vec<String>,
    /// `(label, text)` for the labeled documents.
    pub labeled: Vec<(String, String)>,
}

impl SynonymCorpus {
    /// `label<TAB>text` lines followed by the unlabeled texts.
    pub fn labeled_lines(&self) -> Vec<String> {
        self.labeled.iter().map(|(l, t)| format!("{l}\t{t}")).collect()
    }
}

pub fn synonym_corpus(config: &SynonymCorpusConfig, seed: u64) -> SynonymCorpus {
    assert!(config.labeled_per_topic <= config.synonyms_per_topic);
    assert!(config.context_per_doc <= config.context_per_topic);
    let mut rng = rng_for(seed, 0);
    let fillers: Vec<String> = (0..config.fillers).map(SynonymCorpusConfig::filler).collect();

    let pick_fillers = |rng: &mut rand_chacha::ChaCha8Rng, words: &mut Vec<String>| {
        for _ in 0..config.fillers_per_doc {
            words.push(fillers.choose(rng).expect("fillers").clone());
        }
    };

    let mut labeled = Vec::new();
    for t in 0..config.topics {
        let mut syns: Vec<usize> = (0..config.synonyms_per_topic).collect();
        syns.shuffle(&mut rng);
        for &j in &syns[..config.labeled_per_topic] {
            let mut words = vec![SynonymCorpusConfig::synonym(t, j)];
            pick_fillers(&mut rng, &mut words);
            words.shuffle(&mut rng);
            labeled.push((SynonymCorpusConfig::label(t), words.join(" ")));
        }
    }

    let mut unlabeled = Vec::new();
    for t in 0..config.topics {
        for _ in 0..config.unlabeled_per_topic {
            let mut words = Vec::new();
            if rng.random_bool(config.anchor_rate) {
                words.push(SynonymCorpusConfig::anchor(t));
            } else {
                let j = rng.random_range(0..config.synonyms_per_topic);
                words.push(SynonymCorpusConfig::synonym(t, j));
            }
            let mut ctx: Vec<usize> = (0..config.context_per_topic).collect();
            ctx.shuffle(&mut rng);
            words.extend(ctx[..config.context_per_doc].iter().map(|&j| SynonymCorpusConfig::context(t, j)));
            pick_fillers(&mut rng, &mut words);
            words.shuffle(&mut rng);
            unlabeled.push(words.join(" "));
        }
    }
    unlabeled.shuffle(&mut rng);

    let texts = labeled.iter().map(|(_, t)| t.clone()).chain(unlabeled).collect();
    SynonymCorpus { texts, labeled }
}
