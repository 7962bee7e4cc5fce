//! Self-check suite comparing the closed-form encoder with the
//! explicit-corruption references. Backs `dcot verify`.

use nalgebra::DMatrix;

use crate::corpus::{Corpus, PrototypeSet, SbowVector};
use crate::encoder::{self, CorruptionConfig, LayerInput, LayerWeights};
use crate::error::{DcotError, Result};
use crate::oracle::{self, MAX_ENUMERATION_DIM};
use crate::synthetic::{random_corpus, top_features};

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Feature count of the synthetic corpora.
    pub dims: usize,
    pub docs: usize,
    pub prototypes: usize,
    pub p: f64,
    /// Largest number of corrupted copies per document in the Monte-Carlo
    /// ladder `100, 1000, ...`.
    pub mc_samples: usize,
    pub mc_seeds: usize,
    /// Randomized corpora in the enumeration check.
    pub enum_corpora: usize,
    /// Run only the enumeration check.
    pub enumerate_only: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 7,
            dims: 10,
            docs: 20,
            prototypes: 3,
            p: 0.5,
            mc_samples: 100_000,
            mc_seeds: 5,
            enum_corpora: 20,
            enumerate_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const ENUMERATION_TOL: f64 = 1e-10;
pub const OLS_TOL: f64 = 1e-8;
pub const HAND_TOL: f64 = 1e-9;
pub const MC_FINAL_GAP: f64 = 0.05;

pub fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

/// The two-document example `x1 = (1, 2)`, `x2 = (0, 1)` with prototype
/// feature 1 and `p = 0.5`.
pub fn hand_worked() -> Result<CheckResult> {
    let corpus = Corpus::new(2, vec![SbowVector::from_dense(&[1, 2]), SbowVector::from_dense(&[0, 1])])?;
    let proto = PrototypeSet::new(vec![1], 2)?;
    let w = encoder::train_layer(LayerInput::Sparse(&corpus), &proto, &CorruptionConfig::new(0.5, 0.0)?)?;
    let got = w.row_major();
    let want = [0.625, 0.125, 1.25];
    let w_err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let z = w.apply(encoder::InputVector::Dense(&[1.0, 2.0]), true)?[0];
    let z_err = (z - 2.125f64.tanh()).abs();
    Ok(CheckResult {
        name: "hand-worked instance",
        passed: w_err <= HAND_TOL && z_err <= HAND_TOL,
        detail: format!("W = {got:?}, |W - W*| = {w_err:.2e}, z = {z:.6}, |z - tanh(2.125)| = {z_err:.2e}"),
    })
}

/// Closed-form `E[Q]`, `E[R]` against exhaustive mask enumeration.
pub fn enumeration(config: &VerifyConfig) -> Result<CheckResult> {
    if config.dims > MAX_ENUMERATION_DIM {
        return Err(DcotError::DimensionTooLarge {
            d: config.dims,
            max: MAX_ENUMERATION_DIM,
        });
    }
    let max_d = config.dims.max(2);
    let max_n = config.docs.max(1);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for c in 0..config.enum_corpora {
        let seed = config.seed.wrapping_add(1000 + c as u64);
        let d = 2 + c % (max_d - 1);
        let n = 1 + (c * 7) % max_n;
        let corpus = random_corpus(n, d, 4, seed);
        let r = 1 + c % (d - 1);
        let proto = top_features(&corpus, r);
        let scatter = encoder::compute_scatter(&corpus, usize::MAX)?;
        for p in [0.1, 0.5, 0.9, 1.0] {
            let (eq_exact, er_exact) = oracle::enumerate_expectations(&corpus, &proto, p)?;
            let eq = encoder::expected_q(&scatter, p)?;
            let er = encoder::expected_r(&scatter, &proto, p)?;
            worst = worst.max(max_abs_diff(&eq, &eq_exact)).max(max_abs_diff(&er, &er_exact));
            cases += 1;
        }
    }
    Ok(CheckResult {
        name: "expectations equal enumeration",
        passed: worst <= ENUMERATION_TOL,
        detail: format!("{cases} cases, max |closed - enumerated| = {worst:.2e} (tol {ENUMERATION_TOL:.0e})"),
    })
}

/// Least squares of `targets` on `[rows; 1]` through an SVD of the data
/// matrix, never forming the normal equations.
pub fn ols_weights(corpus: &Corpus, prototypes: &PrototypeSet) -> Result<DMatrix<f64>> {
    let (n, d) = (corpus.n(), corpus.dim());
    let mut a = DMatrix::<f64>::zeros(n, d + 1);
    let mut y = DMatrix::<f64>::zeros(n, prototypes.len());
    for (i, x) in corpus.docs().iter().enumerate() {
        for &(j, c) in x.entries() {
            a[(i, j)] = c as f64;
        }
        a[(i, d)] = 1.0;
        for (k, &pk) in prototypes.indices().iter().enumerate() {
            y[(i, k)] = x.get(pk) as f64;
        }
    }
    let svd = a.svd(true, true);
    let coef = svd
        .solve(&y, 1e-12)
        .map_err(|e| DcotError::InvalidConfig(format!("svd solve: {e}")))?;
    Ok(coef.transpose())
}

/// With `p = 1` the marginalized layer is ordinary least squares.
pub fn no_corruption(config: &VerifyConfig) -> Result<CheckResult> {
    let d = config.dims.max(2);
    let n = config.docs.max(4 * (d + 1));
    let corpus = random_corpus(n, d, 5, config.seed.wrapping_add(77));
    let proto = top_features(&corpus, config.prototypes.clamp(1, d - 1));
    let w = encoder::train_layer(LayerInput::Sparse(&corpus), &proto, &CorruptionConfig::new(1.0, 0.0)?)?;
    let ols = ols_weights(&corpus, &proto)?;
    let gap_ols = relative_gap(w.matrix(), &ols);
    let explicit = oracle::train_explicit(&corpus, &proto, 1.0, 3, config.seed, 0.0)?;
    let gap_explicit = relative_gap(explicit.matrix(), w.matrix());
    Ok(CheckResult {
        name: "p = 1 reduces to least squares",
        passed: gap_ols <= OLS_TOL && gap_explicit <= OLS_TOL,
        detail: format!(
            "n = {n}, d = {d}: |W - W_ols|/|W_ols| = {gap_ols:.2e}, |W_explicit - W|/|W| = {gap_explicit:.2e} (tol {OLS_TOL:.0e})"
        ),
    })
}

/// Copies-per-document values used by the Monte-Carlo check.
pub fn mc_ladder(max: usize) -> Vec<usize> {
    let mut ladder = Vec::new();
    let mut m = 100;
    while m < max {
        ladder.push(m);
        m *= 10;
    }
    ladder.push(max);
    ladder
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// `(m, median relative Frobenius gap over seeds)`.
    pub medians: Vec<(usize, f64)>,
}

impl ConvergenceTrace {
    pub fn strictly_decreasing(&self) -> bool {
        self.medians.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn final_gap(&self) -> f64 {
        self.medians.last().map(|m| m.1).unwrap_or(f64::INFINITY)
    }
}

fn explicit_with_retry(corpus: &Corpus, proto: &PrototypeSet, p: f64, m: usize, seed: u64) -> Result<LayerWeights> {
    match oracle::train_explicit(corpus, proto, p, m, seed, 0.0) {
        Err(DcotError::SingularSystem) => oracle::train_explicit(corpus, proto, p, m, seed, 1e-9),
        other => other,
    }
}

/// Relative gap between sampled and marginalized weights along the ladder.
pub fn convergence_trace(config: &VerifyConfig) -> Result<ConvergenceTrace> {
    let corpus = random_corpus(config.docs.max(1), config.dims.max(2), 3, config.seed);
    let proto = top_features(&corpus, config.prototypes.clamp(1, config.dims.max(2) - 1));
    let cfg = CorruptionConfig::new(config.p, 0.0)?;
    let closed = encoder::train_layer(LayerInput::Sparse(&corpus), &proto, &cfg)?;
    let mut medians = Vec::new();
    for m in mc_ladder(config.mc_samples.max(1)) {
        let mut gaps = (0..config.mc_seeds.max(1))
            .map(|s| {
                let seed = config.seed.wrapping_mul(31).wrapping_add(s as u64);
                explicit_with_retry(&corpus, &proto, config.p, m, seed)
                    .map(|w| relative_gap(w.matrix(), closed.matrix()))
            })
            .collect::<Result<Vec<f64>>>()?;
        medians.push((m, median(&mut gaps)));
    }
    Ok(ConvergenceTrace { medians })
}

pub fn monte_carlo(config: &VerifyConfig) -> Result<CheckResult> {
    let trace = convergence_trace(config)?;
    let gaps: Vec<String> = trace.medians.iter().map(|(m, g)| format!("m={m}: {g:.4}")).collect();
    Ok(CheckResult {
        name: "sampled corruption converges",
        passed: trace.strictly_decreasing() && trace.final_gap() < MC_FINAL_GAP,
        detail: format!(
            "median relative gap {} (final must be < {MC_FINAL_GAP}, strictly decreasing)",
            gaps.join(", ")
        ),
    })
}

/// Runs the selected checks in order.
pub fn run(config: &VerifyConfig) -> Result<Vec<CheckResult>> {
    if config.enumerate_only {
        return Ok(vec![enumeration(config)?]);
    }
    Ok(vec![
        hand_worked()?,
        enumeration(config)?,
        no_corruption(config)?,
        monte_carlo(config)?,
    ])
}
