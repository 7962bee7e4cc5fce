//! Recursive re-application of the encoder and the concatenated output
//! representation.

use crate::corpus::{Corpus, PrototypeSet, SbowVector, Vocabulary};
use crate::encoder::{self, CorruptionConfig, InputVector, LayerFit, LayerInput, LayerWeights};
use crate::error::{DcotError, Result};
use crate::vector::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StackConfig {
    pub corruption: CorruptionConfig,
    pub layers: usize,
    pub squash: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            corruption: CorruptionConfig::default(),
            layers: 1,
            squash: true,
        }
    }
}

/// A trained stack: layer 1 maps the `d`-dimensional vocabulary space onto
/// the `r` prototypes, every further layer maps `r` onto `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct DcotModel {
    vocab: Vocabulary,
    prototypes: PrototypeSet,
    p: f64,
    ridge: f64,
    squash: bool,
    layers: Vec<LayerWeights>,
}

impl DcotModel {
    /// Assembles a model, checking the shape chain and parameter ranges.
    pub fn from_parts(
        vocab: Vocabulary,
        prototypes: PrototypeSet,
        p: f64,
        ridge: f64,
        squash: bool,
        layers: Vec<LayerWeights>,
    ) -> Result<Self> {
        let d = vocab.len();
        let r = prototypes.len();
        let bad = |msg: String| Err(DcotError::InvariantViolation(msg));
        if r == 0 || r >= d {
            return bad(format!("prototype count {r} not in (0, {d})"));
        }
        if let Some(&i) = prototypes.indices().iter().find(|&&i| i >= d) {
            return bad(format!("prototype index {i} >= d = {d}"));
        }
        if !(p > 0.0 && p <= 1.0) {
            return bad(format!("survival probability {p} not in (0,1]"));
        }
        if !(ridge.is_finite() && ridge >= 0.0) {
            return bad(format!("ridge {ridge} is negative or not finite"));
        }
        if layers.is_empty() {
            return bad("model has no layers".into());
        }
        for (k, layer) in layers.iter().enumerate() {
            let want_in = if k == 0 { d } else { r };
            if layer.r() != r || layer.input_dim() != want_in {
                return bad(format!(
                    "layer {} has shape {}x{}, expected {}x{}",
                    k + 1,
                    layer.r(),
                    layer.input_dim() + 1,
                    r,
                    want_in + 1
                ));
            }
        }
        Ok(DcotModel {
            vocab,
            prototypes,
            p,
            ridge,
            squash,
            layers,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn prototypes(&self) -> &PrototypeSet {
        &self.prototypes
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn squash(&self) -> bool {
        self.squash
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn d(&self) -> usize {
        self.vocab.len()
    }

    pub fn r(&self) -> usize {
        self.prototypes.len()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Length of a flattened representation, `d + l * r`.
    pub fn output_dim(&self) -> usize {
        self.d() + self.depth() * self.r()
    }

    pub fn transform(&self, x: &SbowVector) -> Result<DenseRepresentation> {
        transform(self, x)
    }

    /// Pre-squash activations of every layer, each computed from the
    /// (squashed, if enabled) output of the layer below.
    pub fn activations(&self, x: &SbowVector) -> Result<Vec<Vec<f64>>> {
        let mut raw = Vec::with_capacity(self.layers.len());
        let mut prev: Option<Vec<f64>> = None;
        for layer in &self.layers {
            let input = match &prev {
                None => InputVector::Sparse(x),
                Some(z) => InputVector::Dense(z),
            };
            let a = layer.apply(input, false)?;
            let z = if self.squash {
                a.iter().map(|&v| encoder::squash(v)).collect()
            } else {
                a.clone()
            };
            raw.push(a);
            prev = Some(z);
        }
        Ok(raw)
    }
}

/// The original sparse input followed by every layer's dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseRepresentation {
    pub original: SbowVector,
    pub layer_outputs: Vec<Vec<f64>>,
}

impl DenseRepresentation {
    pub fn len(&self) -> usize {
        self.original.dim() + self.layer_outputs.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> SparseVector {
        flatten(self)
    }
}

/// Trains `config.layers` layers greedily, bottom to top.
pub fn train_stack(
    vocab: Vocabulary,
    corpus: &Corpus,
    prototypes: PrototypeSet,
    config: &StackConfig,
) -> Result<DcotModel> {
    train_stack_with_fits(vocab, corpus, prototypes, config).map(|(m, _)| m)
}

/// Like [`train_stack`], also returning each layer's solve diagnostics.
pub fn train_stack_with_fits(
    vocab: Vocabulary,
    corpus: &Corpus,
    prototypes: PrototypeSet,
    config: &StackConfig,
) -> Result<(DcotModel, Vec<LayerFit>)> {
    config.corruption.validate()?;
    if config.layers == 0 {
        return Err(DcotError::InvalidConfig("layer count must be at least 1".into()));
    }
    if corpus.dim() != vocab.len() {
        return Err(DcotError::DimensionMismatch {
            expected: vocab.len(),
            found: corpus.dim(),
        });
    }
    if corpus.is_empty() {
        return Err(DcotError::EmptyCorpus);
    }
    let r = prototypes.len();

    let first = encoder::fit_layer(LayerInput::Sparse(corpus), &prototypes, &config.corruption)
        .map_err(|e| e.in_layer(1))?;
    let mut outputs: Vec<Vec<f64>> = corpus
        .docs()
        .iter()
        .map(|x| first.weights.apply(InputVector::Sparse(x), config.squash))
        .collect::<Result<_>>()
        .map_err(|e| e.in_layer(1))?;
    let mut fits = vec![first];

    let identity = PrototypeSet::identity(r);
    for k in 2..=config.layers {
        let fit = encoder::fit_layer(
            LayerInput::Dense { dim: r, rows: &outputs },
            &identity,
            &config.corruption,
        )
        .map_err(|e| e.in_layer(k))?;
        if k < config.layers {
            outputs = outputs
                .iter()
                .map(|z| fit.weights.apply(InputVector::Dense(z), config.squash))
                .collect::<Result<_>>()
                .map_err(|e| e.in_layer(k))?;
        }
        fits.push(fit);
    }

    let layers = fits.iter().map(|f| f.weights.clone()).collect();
    let model = DcotModel::from_parts(
        vocab,
        prototypes,
        config.corruption.p,
        config.corruption.ridge,
        config.squash,
        layers,
    )?;
    Ok((model, fits))
}

/// `z^1 = tanh(W^1 [x; 1])`, `z^k = tanh(W^k [z^(k-1); 1])`.
pub fn transform(model: &DcotModel, x: &SbowVector) -> Result<DenseRepresentation> {
    if x.dim() != model.d() {
        return Err(DcotError::DimensionMismatch {
            expected: model.d(),
            found: x.dim(),
        });
    }
    let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(model.depth());
    for layer in &model.layers {
        let z = match outputs.last() {
            None => layer.apply(InputVector::Sparse(x), model.squash)?,
            Some(prev) => layer.apply(InputVector::Dense(prev), model.squash)?,
        };
        outputs.push(z);
    }
    Ok(DenseRepresentation {
        original: x.clone(),
        layer_outputs: outputs,
    })
}

/// `(x, z^1, ..., z^l)` as one vector. The `x` block stays sparse; each
/// `z` block is stored densely, zeros included.
pub fn flatten(rep: &DenseRepresentation) -> SparseVector {
    let d = rep.original.dim();
    let mut entries: Vec<(usize, f64)> = rep
        .original
        .entries()
        .iter()
        .map(|&(i, c)| (i, c as f64))
        .collect();
    let mut offset = d;
    for z in &rep.layer_outputs {
        entries.extend(z.iter().enumerate().map(|(j, &v)| (offset + j, v)));
        offset += z.len();
    }
    SparseVector::from_sorted_unchecked(offset, entries)
}
