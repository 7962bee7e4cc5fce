//! Closed-form marginalized denoising encoders for bag-of-words text.
//!
//! Documents are turned into sparse term-count vectors ([`corpus`]). A
//! layer ([`encoder`]) learns an affine map from those counts onto a small
//! set of frequent "prototype" terms by reconstructing the prototypes from
//! randomly corrupted inputs, with the corruption marginalized out so that
//! training is a single linear solve. Layers can be stacked ([`stack`]);
//! the final representation concatenates the input with every layer's
//! `tanh`-squashed output.
//!
//! [`oracle`] holds explicit-corruption references used to check the closed
//! form, [`eval`] a kNN probe, and [`model_io`] the binary model format.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod model_io;
pub mod oracle;
pub mod stack;
pub mod synthetic;
pub mod vector;
pub mod verify;

pub use corpus::{
    build_vocabulary, select_prototypes, tokenize, vectorize, Corpus, PrototypeSet, SbowVector, TokenizerConfig,
    Vocabulary,
};
pub use encoder::{
    compute_scatter, expected_q, expected_r, solve_weights, train_layer, transform_layer, CorruptionConfig,
    InputVector, LayerInput, LayerWeights, ScatterMatrix,
};
pub use error::{DcotError, Result};
pub use eval::{accuracy, compare_representations, knn_classify, EvalReport, LabeledCorpus, Metric};
pub use stack::{flatten, train_stack, transform, DcotModel, DenseRepresentation, StackConfig};
pub use vector::SparseVector;
