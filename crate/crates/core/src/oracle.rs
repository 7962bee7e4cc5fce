//! Explicit-corruption reference implementations.
//!
//! These exist to check the closed-form encoder, not to train production
//! models: [`train_explicit`] draws `m` corrupted copies of every document
//! and solves the resulting least-squares problem, and
//! [`enumerate_expectations`] sums over every dropout mask with its exact
//! probability.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with an explicit
//! 64-bit seed. Document `i` draws from stream `i` of that generator, so
//! results do not depend on how documents are partitioned across threads.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{Corpus, PrototypeSet, SbowVector};
use crate::encoder::{check_probability, LayerWeights};
use crate::error::{DcotError, Result};

/// Largest dimension [`enumerate_expectations`] accepts (2^12 masks).
pub const MAX_ENUMERATION_DIM: usize = 12;

const DOCS_PER_CHUNK: usize = 16;

/// The generator used by every sampling routine in this module.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One dropout mask over the `d` features of a document. The bias feature
/// is not part of the mask and always survives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionSample {
    pub source_doc: usize,
    pub mask: Vec<bool>,
}

impl CorruptionSample {
    pub fn draw<R: Rng + ?Sized>(source_doc: usize, dim: usize, p: f64, rng: &mut R) -> Result<Self> {
        check_probability(p)?;
        let mask = (0..dim).map(|_| rng.random::<f64>() < p).collect();
        Ok(CorruptionSample { source_doc, mask })
    }

    pub fn apply(&self, x: &SbowVector) -> Result<SbowVector> {
        if x.dim() != self.mask.len() {
            return Err(DcotError::DimensionMismatch {
                expected: self.mask.len(),
                found: x.dim(),
            });
        }
        Ok(x.filtered(|i, _| self.mask[i]))
    }
}

/// Keeps each nonzero coordinate of `x` independently with probability `p`.
/// A coordinate is dropped or kept whole, whatever its count.
pub fn corrupt<R: Rng + ?Sized>(x: &SbowVector, p: f64, rng: &mut R) -> Result<SbowVector> {
    check_probability(p)?;
    Ok(x.filtered(|_, _| rng.random::<f64>() < p))
}

/// Q and R summed over all corrupted copies of a range of documents.
struct Moments {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn accumulate_docs(
    docs: &[SbowVector],
    first_doc: usize,
    prototypes: &[usize],
    dim: usize,
    p: f64,
    m: usize,
    seed: u64,
) -> Moments {
    let size = dim + 1;
    let mut q = DMatrix::<f64>::zeros(size, size);
    let mut r = DMatrix::<f64>::zeros(prototypes.len(), size);
    for (offset, x) in docs.iter().enumerate() {
        let mut rng = rng_for(seed, (first_doc + offset) as u64);
        // Augmented support: the document's nonzeros, then the bias.
        let mut support: Vec<(usize, f64)> = x.entries().iter().map(|&(i, c)| (i, c as f64)).collect();
        support.push((dim, 1.0));
        let s = support.len();
        let bias = s - 1;
        // together[a * s + b]: copies in which both a and b survived.
        let mut together = vec![0u64; s * s];
        let mut alive: Vec<usize> = Vec::with_capacity(s);
        for _ in 0..m {
            alive.clear();
            for a in 0..bias {
                if rng.random::<f64>() < p {
                    alive.push(a);
                }
            }
            alive.push(bias);
            for (ia, &a) in alive.iter().enumerate() {
                for &b in &alive[ia..] {
                    together[a * s + b] += 1;
                }
            }
        }
        for a in 0..s {
            for b in a..s {
                let c = together[a * s + b];
                if c == 0 {
                    continue;
                }
                let v = support[a].1 * support[b].1 * c as f64;
                q[(support[a].0, support[b].0)] += v;
                if a != b {
                    q[(support[b].0, support[a].0)] += v;
                }
            }
        }
        for (k, &pk) in prototypes.iter().enumerate() {
            let target = x.get(pk) as f64;
            if target == 0.0 {
                continue;
            }
            for (a, &(ia, va)) in support.iter().enumerate() {
                r[(k, ia)] += target * va * together[a * s + a] as f64;
            }
        }
    }
    Moments { q, r }
}

/// Least squares on `m` explicitly corrupted copies of every document.
///
/// Solves `W (Q / nm + ridge I) = R / nm` where `Q` and `R` are summed over
/// all `n * m` samples. The design matrix is never materialized.
pub fn train_explicit(
    corpus: &Corpus,
    prototypes: &PrototypeSet,
    p: f64,
    m: usize,
    seed: u64,
    ridge: f64,
) -> Result<LayerWeights> {
    check_probability(p)?;
    if m == 0 {
        return Err(DcotError::InvalidConfig("m must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(DcotError::EmptyCorpus);
    }
    let dim = corpus.dim();
    if let Some(&bad) = prototypes.indices().iter().find(|&&i| i >= dim) {
        return Err(DcotError::IndexOutOfRange { index: bad, dim });
    }
    let chunks: Vec<Moments> = corpus
        .docs()
        .par_chunks(DOCS_PER_CHUNK)
        .enumerate()
        .map(|(c, docs)| accumulate_docs(docs, c * DOCS_PER_CHUNK, prototypes.indices(), dim, p, m, seed))
        .collect();
    let mut total = Moments {
        q: DMatrix::zeros(dim + 1, dim + 1),
        r: DMatrix::zeros(prototypes.len(), dim + 1),
    };
    for part in chunks {
        total.q += part.q;
        total.r += part.r;
    }
    let scale = 1.0 / (corpus.n() as f64 * m as f64);
    solve_lu(&(total.q * scale), &(total.r * scale), ridge)
}

/// `W (a + ridge I) = b` through a fully pivoted LU factorization.
fn solve_lu(a: &DMatrix<f64>, b: &DMatrix<f64>, ridge: f64) -> Result<LayerWeights> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(DcotError::InvalidRidge(ridge));
    }
    let size = a.nrows();
    let mut a = a.clone();
    for i in 0..size {
        a[(i, i)] += ridge;
    }
    let lu = a.full_piv_lu();
    let pivots = lu.u().diagonal().map(f64::abs);
    let largest = pivots.max();
    if largest == 0.0 || pivots.min() <= size as f64 * f64::EPSILON * largest {
        return Err(DcotError::SingularSystem);
    }
    // a is symmetric, so W^T solves a W^T = b^T.
    let wt = lu.solve(&b.transpose()).ok_or(DcotError::SingularSystem)?;
    LayerWeights::from_matrix(wt.transpose())
}

/// Exact `E[Q]` and `E[R]` by summing over all `2^d` dropout masks of every
/// document, each weighted by its probability.
pub fn enumerate_expectations(
    corpus: &Corpus,
    prototypes: &PrototypeSet,
    p: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_probability(p)?;
    let d = corpus.dim();
    if d > MAX_ENUMERATION_DIM {
        return Err(DcotError::DimensionTooLarge {
            d,
            max: MAX_ENUMERATION_DIM,
        });
    }
    if let Some(&bad) = prototypes.indices().iter().find(|&&i| i >= d) {
        return Err(DcotError::IndexOutOfRange { index: bad, dim: d });
    }
    let size = d + 1;
    let mut eq = DMatrix::<f64>::zeros(size, size);
    let mut er = DMatrix::<f64>::zeros(prototypes.len(), size);
    let mut corrupted = vec![0.0; size];
    for x in corpus.docs() {
        let dense = x.to_dense();
        for mask in 0u32..(1u32 << d) {
            let kept = mask.count_ones() as i32;
            let prob = p.powi(kept) * (1.0 - p).powi(d as i32 - kept);
            if prob == 0.0 {
                continue;
            }
            for j in 0..d {
                corrupted[j] = if mask & (1 << j) != 0 { dense[j] } else { 0.0 };
            }
            corrupted[d] = 1.0;
            for a in 0..size {
                for b in 0..size {
                    eq[(a, b)] += prob * corrupted[a] * corrupted[b];
                }
            }
            for (k, &pk) in prototypes.indices().iter().enumerate() {
                for b in 0..size {
                    er[(k, b)] += prob * dense[pk] * corrupted[b];
                }
            }
        }
    }
    Ok((eq, er))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Corpus {
        Corpus::new(
            2,
            vec![SbowVector::from_dense(&[1, 2]), SbowVector::from_dense(&[0, 1])],
        )
        .unwrap()
    }

    #[test]
    fn corrupt_edge_cases() {
        let mut rng = rng_for(1, 0);
        let x = SbowVector::from_dense(&[3, 0, 1, 5]);
        assert_eq!(corrupt(&x, 1.0, &mut rng).unwrap(), x);
        assert_eq!(corrupt(&SbowVector::empty(4), 0.3, &mut rng).unwrap(), SbowVector::empty(4));
        assert!(matches!(corrupt(&x, 0.0, &mut rng), Err(DcotError::InvalidProbability(_))));
    }

    #[test]
    fn corrupt_survival_count_is_binomial() {
        let x = SbowVector::from_dense(&vec![1u32; 10_000]);
        let mut inside = 0;
        for seed in 0..20u64 {
            let kept = corrupt(&x, 0.5, &mut rng_for(seed, 0)).unwrap().nnz();
            if (4850..=5150).contains(&kept) {
                inside += 1;
            }
        }
        // Each seed lands inside the 3-sigma band with probability ~0.997.
        assert!(inside >= 19, "{inside}/20 inside band");
    }

    #[test]
    fn sample_mask_matches_corrupt() {
        let x = SbowVector::from_dense(&[1, 2, 0, 4]);
        let s = CorruptionSample::draw(0, 4, 0.5, &mut rng_for(9, 0)).unwrap();
        let direct = corrupt(&x, 0.5, &mut rng_for(9, 0)).unwrap();
        // draw() consumes one number per feature while corrupt() consumes one
        // per nonzero, so only compare structural properties.
        let masked = s.apply(&x).unwrap();
        assert!(masked.entries().iter().all(|&(i, c)| s.mask[i] && x.get(i) == c));
        assert!(direct.entries().iter().all(|&(i, c)| x.get(i) == c));
    }

    #[test]
    fn enumeration_of_tiny_corpus() {
        let proto = PrototypeSet::new(vec![1], 2).unwrap();
        let (eq, er) = enumerate_expectations(&tiny(), &proto, 0.5).unwrap();
        let want_q = [[0.5, 0.5, 0.5], [0.5, 2.5, 1.5], [0.5, 1.5, 2.0]];
        for a in 0..3 {
            for b in 0..3 {
                assert!((eq[(a, b)] - want_q[a][b]).abs() < 1e-12);
            }
        }
        for (b, want) in [1.0, 2.5, 3.0].iter().enumerate() {
            assert!((er[(0, b)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_single_feature() {
        let c = Corpus::new(1, vec![SbowVector::from_dense(&[3]), SbowVector::from_dense(&[2])]).unwrap();
        let proto = PrototypeSet::identity(1);
        let (eq, _) = enumerate_expectations(&c, &proto, 0.3).unwrap();
        assert!((eq[(0, 0)] - 0.3 * (9.0 + 4.0)).abs() < 1e-12);
    }

    #[test]
    fn enumeration_cap() {
        let c = Corpus::new(13, vec![SbowVector::empty(13)]).unwrap();
        assert!(matches!(
            enumerate_expectations(&c, &PrototypeSet::identity(1), 0.5),
            Err(DcotError::DimensionTooLarge { d: 13, max: 12 })
        ));
    }

    #[test]
    fn explicit_is_deterministic() {
        let proto = PrototypeSet::new(vec![1], 2).unwrap();
        let a = train_explicit(&tiny(), &proto, 0.5, 500, 42, 0.0).unwrap();
        let b = train_explicit(&tiny(), &proto, 0.5, 500, 42, 0.0).unwrap();
        assert_eq!(a.row_major(), b.row_major());
    }

    #[test]
    fn explicit_without_corruption_is_least_squares() {
        let c = Corpus::new(
            2,
            vec![
                SbowVector::from_dense(&[1, 2]),
                SbowVector::from_dense(&[0, 1]),
                SbowVector::from_dense(&[3, 1]),
            ],
        )
        .unwrap();
        let proto = PrototypeSet::new(vec![1], 2).unwrap();
        let w = train_explicit(&c, &proto, 1.0, 7, 3, 0.0).unwrap();
        // The target is an input column, so the least-squares fit is exact.
        let v = w.row_major();
        assert!((v[0]).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12 && v[2].abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn corrupt_only_removes(
                counts in prop::collection::vec(0u32..5, 1..30),
                p in 0.05f64..=1.0,
                seed in any::<u64>(),
            ) {
                let x = SbowVector::from_dense(&counts);
                let y = corrupt(&x, p, &mut rng_for(seed, 0)).unwrap();
                prop_assert!(y.entries().iter().all(|&(i, c)| x.get(i) == c));
                prop_assert!(y.nnz() <= x.nnz());
            }
        }
    }
}
