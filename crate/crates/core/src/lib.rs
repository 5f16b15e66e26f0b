//! Motion features from spatio-temporal synchrony.
//!
//! The crate is organised around five areas:
//!
//! * [`data`]: video blocks, synthetic translating-patch corpora, block
//!   cropping, PCA whitening and contrast normalisation.
//! * [`synchrony`]: orthogonal warps, the synchrony test, product units and
//!   the energy response.
//! * [`skmeans`]: synchrony K-means with its local learning rules, plus the
//!   standard online K-means baseline.
//! * [`sae`]: the synchrony autoencoder with a closed-form contractive
//!   penalty, analytic gradients and a finite-difference checker, plus a
//!   plain contractive autoencoder baseline.
//! * [`pipeline`]: dense super-block descriptors, vocabularies, histograms,
//!   the chi-squared kernel and k-NN evaluation.
//!
//! Tensors are exchanged on disk in the little-endian [`vtb`] format and
//! trained models are stored as [`bundle`] directories.

pub mod bundle;
pub mod data;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod sae;
pub mod skmeans;
pub mod synchrony;
pub mod vtb;

pub use data::{
    contrast_normalize, crop_blocks, fit_whitening, generate_sinusoid_pair,
    generate_translating_patches, BlockDims, PatchDataset, VideoBlock, WhiteningConfig,
    WhiteningTransform,
};
pub use encoder::{FeatureEncoder, Mode};
pub use error::{Error, Result};
pub use linalg::FilterBank;
pub use pipeline::{Codebook, DescriptorConfig, Histogram};
pub use sae::{SaeActivations, SaeModel};
pub use skmeans::{SkMeansModel, TrainConfig};
pub use synchrony::{FilterPair, SynchronyVerdict, WarpOperator};
