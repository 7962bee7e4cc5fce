//! The marginalized denoising layer.
//!
//! A layer maps an input `x` (plus a constant bias feature that is never
//! corrupted) onto `r` reconstruction targets. Instead of sampling corrupted
//! copies of the data, the least-squares solution is computed from the
//! expected second moments under feature dropout with survival probability
//! `p`:
//!
//! ```text
//! S      = sum_i [x_i; 1][x_i; 1]^T
//! q      = [p, ..., p, 1]
//! E[Q]ab = S_ab q_a q_b   (a != b),   E[Q]aa = S_aa q_a
//! E[R]kb = S_(p_k)b q_b
//! W      = E[R] E[Q]^-1
//! ```
//!
//! Everything here is deterministic; no random numbers are drawn.

use nalgebra::DMatrix;

use crate::corpus::{Corpus, PrototypeSet, SbowVector};
use crate::error::{DcotError, Result};

/// Default upper bound on the input dimension accepted for dense scatter
/// accumulation.
pub const DEFAULT_MAX_DIM: usize = 40_000;

/// Default ridge coefficient, relative to the mean diagonal of `E[Q]`.
pub const DEFAULT_RIDGE: f64 = 1e-5;

/// Largest `f64` strictly below one. `tanh` rounds to exactly 1.0 for
/// arguments above ~19, so squashed values are clamped to this.
const SQUASH_LIMIT: f64 = 1.0 - f64::EPSILON / 2.0;

pub fn squash(v: f64) -> f64 {
    v.tanh().clamp(-SQUASH_LIMIT, SQUASH_LIMIT)
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(DcotError::InvalidProbability(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionConfig {
    /// Probability that a feature survives corruption.
    pub p: f64,
    /// Ridge coefficient. The absolute regularizer added to the diagonal of
    /// `E[Q]` is `ridge * trace(E[Q]) / (dim + 1)`; zero solves the
    /// unregularized system exactly.
    pub ridge: f64,
    /// Refuse inputs whose dimension exceeds this.
    pub max_dim: usize,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            p: 0.5,
            ridge: DEFAULT_RIDGE,
            max_dim: DEFAULT_MAX_DIM,
        }
    }
}

impl CorruptionConfig {
    pub fn new(p: f64, ridge: f64) -> Result<Self> {
        let config = CorruptionConfig {
            p,
            ridge,
            ..Default::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_probability(self.p)?;
        if !(self.ridge.is_finite() && self.ridge >= 0.0) {
            return Err(DcotError::InvalidRidge(self.ridge));
        }
        Ok(())
    }
}

/// One input vector for a layer: a sparse document or a dense output of a
/// previous layer.
#[derive(Debug, Clone, Copy)]
pub enum InputVector<'a> {
    Sparse(&'a SbowVector),
    Dense(&'a [f64]),
}

impl InputVector<'_> {
    pub fn dim(&self) -> usize {
        match self {
            InputVector::Sparse(x) => x.dim(),
            InputVector::Dense(x) => x.len(),
        }
    }

    /// Nonzero `(index, value)` pairs in increasing index order.
    fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            InputVector::Sparse(x) => x.entries().iter().for_each(|&(i, c)| f(i, c as f64)),
            InputVector::Dense(x) => x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .for_each(|(i, &v)| f(i, v)),
        }
    }
}

/// The training inputs of a layer.
#[derive(Debug, Clone, Copy)]
pub enum LayerInput<'a> {
    Sparse(&'a Corpus),
    Dense { dim: usize, rows: &'a [Vec<f64>] },
}

impl<'a> LayerInput<'a> {
    pub fn dim(&self) -> usize {
        match self {
            LayerInput::Sparse(c) => c.dim(),
            LayerInput::Dense { dim, .. } => *dim,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            LayerInput::Sparse(c) => c.n(),
            LayerInput::Dense { rows, .. } => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> InputVector<'a> {
        match *self {
            LayerInput::Sparse(c) => InputVector::Sparse(&c.docs()[i]),
            LayerInput::Dense { rows, .. } => InputVector::Dense(&rows[i]),
        }
    }
}

/// `S = sum_i [x_i; 1][x_i; 1]^T`. Row/column `dim` belongs to the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMatrix {
    dim: usize,
    s: DMatrix<f64>,
}

impl ScatterMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Number of accumulated documents, read off the bias entry.
    pub fn n(&self) -> f64 {
        self.s[(self.dim, self.dim)]
    }
}

pub fn compute_scatter(corpus: &Corpus, max_dim: usize) -> Result<ScatterMatrix> {
    compute_scatter_for(LayerInput::Sparse(corpus), max_dim)
}

/// Accumulates the scatter matrix in document order.
pub fn compute_scatter_for(input: LayerInput<'_>, max_dim: usize) -> Result<ScatterMatrix> {
    let dim = input.dim();
    if dim > max_dim {
        return Err(DcotError::DimensionCap { dim, cap: max_dim });
    }
    if input.is_empty() {
        return Err(DcotError::EmptyCorpus);
    }
    let size = dim + 1;
    let mut s = DMatrix::<f64>::zeros(size, size);
    let mut nz: Vec<(usize, f64)> = Vec::new();
    for i in 0..input.len() {
        let row = input.row(i);
        if row.dim() != dim {
            return Err(DcotError::DimensionMismatch {
                expected: dim,
                found: row.dim(),
            });
        }
        nz.clear();
        row.for_each_nonzero(|j, v| nz.push((j, v)));
        nz.push((dim, 1.0));
        // Upper triangle only (column index >= row index).
        for (a, &(ia, va)) in nz.iter().enumerate() {
            for &(ib, vb) in &nz[a..] {
                s[(ia, ib)] += va * vb;
            }
        }
    }
    for c in 0..size {
        for r in (c + 1)..size {
            s[(r, c)] = s[(c, r)];
        }
    }
    Ok(ScatterMatrix { dim, s })
}

fn survival(dim: usize, p: f64) -> Vec<f64> {
    let mut q = vec![p; dim + 1];
    q[dim] = 1.0;
    q
}

/// Expected corrupted second moment `E[Q]`.
pub fn expected_q(scatter: &ScatterMatrix, p: f64) -> Result<DMatrix<f64>> {
    check_probability(p)?;
    let q = survival(scatter.dim, p);
    let size = scatter.dim + 1;
    Ok(DMatrix::from_fn(size, size, |a, b| {
        if a == b {
            scatter.s[(a, a)] * q[a]
        } else {
            scatter.s[(a, b)] * q[a] * q[b]
        }
    }))
}

/// Expected target/input cross moment `E[R]`. Row `k` is the prototype row
/// `p_k` of `S`; the survival factor attaches to the corrupted column index.
pub fn expected_r(scatter: &ScatterMatrix, prototypes: &PrototypeSet, p: f64) -> Result<DMatrix<f64>> {
    check_probability(p)?;
    let dim = scatter.dim;
    if let Some(&bad) = prototypes.indices().iter().find(|&&i| i >= dim) {
        return Err(DcotError::IndexOutOfRange { index: bad, dim });
    }
    let q = survival(dim, p);
    let rows = prototypes.indices();
    Ok(DMatrix::from_fn(rows.len(), dim + 1, |k, b| {
        scatter.s[(rows[k], b)] * q[b]
    }))
}

/// A learned affine map `r x (input_dim + 1)`; the last column is the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    w: DMatrix<f64>,
}

impl LayerWeights {
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if w.ncols() == 0 || w.nrows() == 0 {
            return Err(DcotError::InvariantViolation("empty weight matrix".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(DcotError::NonFiniteResult);
        }
        Ok(LayerWeights { w })
    }

    /// Row-major values, `r * (input_dim + 1)` of them.
    pub fn from_row_major(r: usize, input_dim: usize, values: &[f64]) -> Result<Self> {
        if values.len() != r * (input_dim + 1) {
            return Err(DcotError::LengthMismatch {
                left: values.len(),
                right: r * (input_dim + 1),
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(r, input_dim + 1, values))
    }

    pub fn r(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols() - 1
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn bias(&self) -> Vec<f64> {
        self.w.column(self.input_dim()).iter().copied().collect()
    }

    pub fn row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len());
        for row in self.w.row_iter() {
            out.extend(row.iter());
        }
        out
    }

    /// `W [x; 1]`, optionally squashed with `tanh`.
    pub fn apply(&self, x: InputVector<'_>, squash_output: bool) -> Result<Vec<f64>> {
        let dim = self.input_dim();
        if x.dim() != dim {
            return Err(DcotError::DimensionMismatch {
                expected: dim,
                found: x.dim(),
            });
        }
        let mut out: Vec<f64> = self.bias();
        x.for_each_nonzero(|j, v| {
            for (k, o) in out.iter_mut().enumerate() {
                *o += self.w[(k, j)] * v;
            }
        });
        if squash_output {
            out.iter_mut().for_each(|v| *v = squash(*v));
        }
        Ok(out)
    }
}

pub fn transform_layer(w: &LayerWeights, x: InputVector<'_>, squash_output: bool) -> Result<Vec<f64>> {
    w.apply(x, squash_output)
}

/// Solves `W (EQ + ridge I) = ER` for `W` with a Cholesky factorization.
///
/// `EQ` is a (corrupted) second-moment matrix and therefore symmetric
/// positive semi-definite. A factor pivot that falls below
/// `size * eps * max_diag` is treated as singular.
pub fn solve_weights(eq: &DMatrix<f64>, er: &DMatrix<f64>, ridge: f64) -> Result<LayerWeights> {
    let size = eq.nrows();
    if eq.ncols() != size || size == 0 {
        return Err(DcotError::DimensionMismatch {
            expected: size,
            found: eq.ncols(),
        });
    }
    if er.ncols() != size {
        return Err(DcotError::DimensionMismatch {
            expected: size,
            found: er.ncols(),
        });
    }
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(DcotError::InvalidRidge(ridge));
    }
    let mut a = eq.clone();
    for i in 0..size {
        a[(i, i)] += ridge;
    }
    let max_diag = a.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max_diag == 0.0 || !max_diag.is_finite() {
        return Err(DcotError::SingularSystem);
    }
    let chol = a.cholesky().ok_or(DcotError::SingularSystem)?;
    let tol = size as f64 * f64::EPSILON * max_diag;
    if chol.l_dirty().diagonal().iter().any(|l| l * l <= tol) {
        return Err(DcotError::SingularSystem);
    }
    let wt = chol.solve(&er.transpose());
    LayerWeights::from_matrix(wt.transpose())
}

/// `||W (EQ + ridge I) - ER||_F / ||ER||_F`.
pub fn relative_residual(w: &LayerWeights, eq: &DMatrix<f64>, er: &DMatrix<f64>, ridge: f64) -> f64 {
    let mut a = eq.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += ridge;
    }
    let diff = w.matrix() * a - er;
    let denom = er.norm();
    if denom == 0.0 {
        diff.norm()
    } else {
        diff.norm() / denom
    }
}

/// A trained layer together with its solve diagnostics.
#[derive(Debug, Clone)]
pub struct LayerFit {
    pub weights: LayerWeights,
    /// Absolute ridge actually added to the diagonal.
    pub ridge: f64,
    pub residual: f64,
}

/// Scatter, expectations and solve, composed.
pub fn fit_layer(input: LayerInput<'_>, prototypes: &PrototypeSet, config: &CorruptionConfig) -> Result<LayerFit> {
    config.validate()?;
    let scatter = compute_scatter_for(input, config.max_dim)?;
    let eq = expected_q(&scatter, config.p)?;
    let er = expected_r(&scatter, prototypes, config.p)?;
    let ridge = config.ridge * eq.trace() / eq.nrows() as f64;
    let weights = solve_weights(&eq, &er, ridge)?;
    let residual = relative_residual(&weights, &eq, &er, ridge);
    Ok(LayerFit {
        weights,
        ridge,
        residual,
    })
}

pub fn train_layer(input: LayerInput<'_>, prototypes: &PrototypeSet, config: &CorruptionConfig) -> Result<LayerWeights> {
    fit_layer(input, prototypes, config).map(|f| f.weights)
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

    fn proto1() -> PrototypeSet {
        PrototypeSet::new(vec![1], 2).unwrap()
    }

    fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j])
    }

    fn brute_scatter(rows: &[Vec<f64>]) -> DMatrix<f64> {
        let size = rows[0].len() + 1;
        let mut s = DMatrix::zeros(size, size);
        for x in rows {
            let mut aug = x.clone();
            aug.push(1.0);
            for a in 0..size {
                for b in 0..size {
                    s[(a, b)] += aug[a] * aug[b];
                }
            }
        }
        s
    }

    #[test]
    fn scatter_of_tiny_corpus() {
        let s = compute_scatter(&tiny(), DEFAULT_MAX_DIM).unwrap();
        let expected = mat(&[&[1., 2., 1.], &[2., 5., 3.], &[1., 3., 2.]]);
        assert_eq!(s.matrix(), &expected);
        assert_eq!(brute_scatter(&[vec![1., 2.], vec![0., 1.]]), expected);
        assert_eq!(s.n(), 2.0);
    }

    #[test]
    fn scatter_of_zero_doc_is_bias_only() {
        let c = Corpus::new(4, vec![SbowVector::empty(4)]).unwrap();
        let s = compute_scatter(&c, DEFAULT_MAX_DIM).unwrap();
        let mut expected = DMatrix::zeros(5, 5);
        expected[(4, 4)] = 1.0;
        assert_eq!(s.matrix(), &expected);
    }

    #[test]
    fn scatter_cap_and_empty() {
        let c = Corpus::new(10, vec![SbowVector::empty(10)]).unwrap();
        assert!(matches!(
            compute_scatter(&c, 9),
            Err(DcotError::DimensionCap { dim: 10, cap: 9 })
        ));
        let e = Corpus::new(3, vec![]).unwrap();
        assert!(matches!(compute_scatter(&e, 100), Err(DcotError::EmptyCorpus)));
    }

    #[test]
    fn expectations_of_tiny_corpus() {
        let s = compute_scatter(&tiny(), DEFAULT_MAX_DIM).unwrap();
        let eq = expected_q(&s, 0.5).unwrap();
        assert_eq!(eq, mat(&[&[0.5, 0.5, 0.5], &[0.5, 2.5, 1.5], &[0.5, 1.5, 2.0]]));
        let er = expected_r(&s, &proto1(), 0.5).unwrap();
        assert_eq!(er, mat(&[&[1.0, 2.5, 3.0]]));

        assert_eq!(&expected_q(&s, 1.0).unwrap(), s.matrix());
        assert_eq!(expected_r(&s, &proto1(), 1.0).unwrap(), mat(&[&[2., 5., 3.]]));
        for p in [0.1, 0.3, 0.77] {
            assert_eq!(expected_q(&s, p).unwrap()[(2, 2)], 2.0);
            assert_eq!(expected_r(&s, &proto1(), p).unwrap()[(0, 1)], 5.0 * p);
        }
    }

    #[test]
    fn expectations_validate_inputs() {
        let s = compute_scatter(&tiny(), DEFAULT_MAX_DIM).unwrap();
        assert!(matches!(expected_q(&s, 0.0), Err(DcotError::InvalidProbability(_))));
        assert!(matches!(expected_q(&s, 1.5), Err(DcotError::InvalidProbability(_))));
        let wide = PrototypeSet::new(vec![2], 4).unwrap();
        assert!(matches!(
            expected_r(&s, &wide, 0.5),
            Err(DcotError::IndexOutOfRange { index: 2, dim: 2 })
        ));
    }

    #[test]
    fn solve_tiny_system() {
        let eq = mat(&[&[0.5, 0.5, 0.5], &[0.5, 2.5, 1.5], &[0.5, 1.5, 2.0]]);
        let er = mat(&[&[1.0, 2.5, 3.0]]);
        let w = solve_weights(&eq, &er, 0.0).unwrap();
        for (got, want) in w.row_major().iter().zip([0.625, 0.125, 1.25]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(relative_residual(&w, &eq, &er, 0.0) < 1e-14);
    }

    #[test]
    fn solve_identity_and_singular() {
        let er = mat(&[&[3.0, -1.0, 0.25], &[0.0, 7.0, 2.0]]);
        let w = solve_weights(&DMatrix::identity(3, 3), &er, 0.0).unwrap();
        assert_eq!(w.matrix(), &er);
        assert!(matches!(
            solve_weights(&DMatrix::zeros(3, 3), &er, 0.0),
            Err(DcotError::SingularSystem)
        ));
        // Rank one, nonzero.
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let rank1 = &v * v.transpose();
        assert!(matches!(solve_weights(&rank1, &er, 0.0), Err(DcotError::SingularSystem)));
        assert!(solve_weights(&rank1, &er, 1e-3).is_ok());
        assert!(matches!(solve_weights(&rank1, &er, -1.0), Err(DcotError::InvalidRidge(_))));
    }

    #[test]
    fn train_and_transform_tiny() {
        let cfg = CorruptionConfig::new(0.5, 0.0).unwrap();
        let w = train_layer(LayerInput::Sparse(&tiny()), &proto1(), &cfg).unwrap();
        assert_eq!((w.r(), w.input_dim()), (1, 2));
        for (got, want) in w.row_major().iter().zip([0.625, 0.125, 1.25]) {
            assert!((got - want).abs() < 1e-12);
        }
        let x = SbowVector::from_dense(&[1, 2]);
        let raw = transform_layer(&w, InputVector::Sparse(&x), false).unwrap();
        assert!((raw[0] - 2.125).abs() < 1e-12);
        let z = transform_layer(&w, InputVector::Sparse(&x), true).unwrap();
        assert!((z[0] - 2.125f64.tanh()).abs() < 1e-12);
        assert!((z[0] - 0.971873).abs() < 1e-6);

        let again = train_layer(LayerInput::Sparse(&tiny()), &proto1(), &cfg).unwrap();
        assert_eq!(w.row_major(), again.row_major());
    }

    #[test]
    fn transform_zero_and_mismatch() {
        let w = LayerWeights::from_row_major(1, 2, &[1.0, -1.0, 0.0]).unwrap();
        let z = w.apply(InputVector::Dense(&[3.0, 3.0]), true).unwrap();
        assert_eq!(z, vec![0.0]);
        assert!(matches!(
            w.apply(InputVector::Dense(&[1.0]), true),
            Err(DcotError::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn squash_stays_inside_open_interval() {
        for v in [0.0, 1.0, 19.0, 40.0, 1e300, f64::INFINITY] {
            assert!(squash(v) < 1.0 && squash(-v) > -1.0);
        }
    }

    #[test]
    fn dense_and_sparse_inputs_agree() {
        let rows = vec![vec![1.0, 2.0], vec![0.0, 1.0]];
        let dense = compute_scatter_for(LayerInput::Dense { dim: 2, rows: &rows }, 10).unwrap();
        let sparse = compute_scatter(&tiny(), 10).unwrap();
        assert_eq!(dense, sparse);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn corpus_strategy() -> impl Strategy<Value = Corpus> {
            (2usize..8).prop_flat_map(|d| {
                prop::collection::vec(prop::collection::vec(0u32..4, d), 1..12).prop_map(move |rows| {
                    Corpus::new(d, rows.iter().map(|r| SbowVector::from_dense(r)).collect()).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn scatter_matches_brute_force(c in corpus_strategy()) {
                let s = compute_scatter(&c, 100).unwrap();
                let rows: Vec<Vec<f64>> = c.docs().iter().map(|d| d.to_dense()).collect();
                prop_assert_eq!(s.matrix(), &brute_scatter(&rows));
                prop_assert_eq!(s.n(), c.n() as f64);
            }

            #[test]
            fn expected_q_is_symmetric(c in corpus_strategy(), p in 0.01f64..=1.0) {
                let s = compute_scatter(&c, 100).unwrap();
                let eq = expected_q(&s, p).unwrap();
                prop_assert_eq!(&eq, &eq.transpose());
                prop_assert_eq!(eq[(c.dim(), c.dim())], c.n() as f64);
            }

            #[test]
            fn solve_residual_is_small(
                seed in prop::collection::vec(-1.0f64..1.0, 36),
                rhs in prop::collection::vec(-5.0f64..5.0, 12),
                ridge in 0.0f64..1.0,
            ) {
                let b = DMatrix::from_row_slice(6, 6, &seed);
                let eq = &b * b.transpose() + DMatrix::identity(6, 6);
                let er = DMatrix::from_row_slice(2, 6, &rhs);
                let w = solve_weights(&eq, &er, ridge).unwrap();
                prop_assert!(relative_residual(&w, &eq, &er, ridge) <= 1e-8);
            }

            #[test]
            fn squashed_outputs_are_bounded(
                vals in prop::collection::vec(-50.0f64..50.0, 6),
                x in prop::collection::vec(-100.0f64..100.0, 2),
            ) {
                let w = LayerWeights::from_row_major(2, 2, &vals).unwrap();
                let z = w.apply(InputVector::Dense(&x), true).unwrap();
                prop_assert!(z.iter().all(|v| *v > -1.0 && *v < 1.0));
            }
        }
    }
}
