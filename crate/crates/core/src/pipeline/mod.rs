//! Bag-of-words video descriptors.
//!
//! Videos are cropped densely into overlapping super blocks. Each super
//! block is split into sub blocks the size of the training patches; their
//! whitened feature vectors are concatenated and reduced with PCA into one
//! local descriptor. Descriptors are quantised against a K-means
//! vocabulary and a video becomes an L1-normalised word histogram,
//! classified with χ² k-NN.

mod classify;
mod kmeans;
mod pca;

pub use classify::{
    chi2_distance, chi2_kernel, evaluate_loo, evaluate_split, kernel_matrix, knn_classify,
    mean_pairwise_distance, EvalReport, Histogram, CHI2_EPS,
};
pub use kmeans::{build_vocabulary, pool_features, pooling_report, Codebook, PoolingGroup};
pub use pca::{fit_descriptor_pca, DescriptorPca};

use crate::data::{crop_blocks, grid_count, BlockDims, VideoBlock, WhiteningTransform};
use crate::encoder::FeatureEncoder;
use crate::error::{check_len, Error, Result};
use crate::linalg::RowMatrix;
use crate::skmeans::unit_scaled;

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorConfig {
    pub super_dims: BlockDims,
    pub sub_dims: BlockDims,
    /// Sub-block stride on every axis.
    pub sub_stride: usize,
    /// Overlap between neighbouring super blocks.
    pub overlap_fraction: f64,
    pub descriptor_pca_dims: usize,
    pub vocab_size: usize,
    pub vocab_iterations: usize,
    pub pooling_centroids: usize,
    pub knn_k: usize,
    /// Scale each whitened sub block to unit norm before inference.
    pub unit_norm_inputs: bool,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            super_dims: BlockDims::new(14, 20, 20),
            sub_dims: BlockDims::new(10, 16, 16),
            sub_stride: 4,
            overlap_fraction: 0.5,
            descriptor_pca_dims: 100,
            vocab_size: 3000,
            vocab_iterations: 50,
            pooling_centroids: 500,
            knn_k: 5,
            unit_norm_inputs: true,
        }
    }
}

impl DescriptorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sub_dims.is_empty() || !self.sub_dims.fits_in(&self.super_dims) {
            return Err(Error::invalid(format!(
                "sub blocks {} must be non-empty and fit in super blocks {}",
                self.sub_dims, self.super_dims
            )));
        }
        if self.sub_stride == 0 {
            return Err(Error::invalid("sub-block stride must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::invalid(format!(
                "overlap {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if self.descriptor_pca_dims == 0 || self.vocab_size == 0 || self.knn_k == 0 {
            return Err(Error::invalid("pca dims, vocabulary size and k must be >= 1"));
        }
        Ok(())
    }

    pub fn sub_strides(&self) -> BlockDims {
        BlockDims::new(self.sub_stride, self.sub_stride, self.sub_stride)
    }

    /// Super-block stride per axis: `⌊extent · (1 − overlap)⌋`, at least 1.
    pub fn super_strides(&self) -> BlockDims {
        let s = |e: usize| (((e as f64) * (1.0 - self.overlap_fraction)).floor() as usize).max(1);
        BlockDims::new(s(self.super_dims.t), s(self.super_dims.h), s(self.super_dims.w))
    }

    pub fn sub_blocks_per_super(&self) -> usize {
        let (s, b, st) = (self.super_dims, self.sub_dims, self.sub_stride);
        grid_count(s.t, b.t, st) * grid_count(s.h, b.h, st) * grid_count(s.w, b.w, st)
    }
}

/// Overlapping super blocks covering `video`.
pub fn dense_superblocks(video: &VideoBlock, cfg: &DescriptorConfig) -> Result<Vec<VideoBlock>> {
    cfg.validate()?;
    if !cfg.super_dims.fits_in(&video.dims()) {
        return Err(Error::invalid(format!(
            "video {} is smaller than one super block {}",
            video.dims(),
            cfg.super_dims
        )));
    }
    crop_blocks(video, cfg.super_dims, cfg.super_strides())
}

/// Feature extraction for super blocks with a trained model.
///
/// The model must consume whole whitened sub blocks, so the whitening
/// input length is the sub-block size and its output length is the model
/// input length.
pub struct DescriptorExtractor<'a> {
    encoder: &'a dyn FeatureEncoder,
    whitening: &'a WhiteningTransform,
    cfg: DescriptorConfig,
    pooling: Option<&'a Codebook>,
    pca: Option<DescriptorPca>,
}

impl<'a> DescriptorExtractor<'a> {
    pub fn new(encoder: &'a dyn FeatureEncoder, whitening: &'a WhiteningTransform, cfg: DescriptorConfig) -> Result<Self> {
        cfg.validate()?;
        check_len("whitening input vs sub-block size", whitening.input_dim(), cfg.sub_dims.len())?;
        check_len("model input vs whitened size", encoder.input_dim(), whitening.retained_dims())?;
        Ok(Self {
            encoder,
            whitening,
            cfg,
            pooling: None,
            pca: None,
        })
    }

    /// Insert a pooling layer between inference and concatenation.
    pub fn with_pooling(mut self, pooling: &'a Codebook) -> Result<Self> {
        check_len("pooling codebook vs model units", pooling.dim(), self.encoder.units())?;
        self.pooling = Some(pooling);
        Ok(self)
    }

    pub fn with_pca(mut self, pca: DescriptorPca) -> Result<Self> {
        check_len("pca input vs raw descriptor", pca.input_dim(), self.raw_len())?;
        self.pca = Some(pca);
        Ok(self)
    }

    pub fn config(&self) -> &DescriptorConfig {
        &self.cfg
    }

    pub fn pca(&self) -> Option<&DescriptorPca> {
        self.pca.as_ref()
    }

    /// Length of one sub-block feature vector.
    pub fn feature_len(&self) -> usize {
        self.pooling.map_or(self.encoder.units(), Codebook::k)
    }

    /// Concatenated length before PCA.
    pub fn raw_len(&self) -> usize {
        self.cfg.sub_blocks_per_super() * self.feature_len()
    }

    /// Whitened sub blocks of one super block, one per row.
    pub fn whitened_subblocks(&self, super_block: &VideoBlock) -> Result<RowMatrix> {
        if super_block.dims() != self.cfg.super_dims {
            return Err(Error::shape(format!(
                "super block is {}, expected {}",
                super_block.dims(),
                self.cfg.super_dims
            )));
        }
        let subs = crop_blocks(super_block, self.cfg.sub_dims, self.cfg.sub_strides())?;
        let mut white = self.whitening.apply_blocks(subs.iter().map(|b| b.values()))?;
        if self.cfg.unit_norm_inputs {
            for i in 0..white.rows() {
                let u = unit_scaled(white.row(i));
                white.row_mut(i).copy_from_slice(&u);
            }
        }
        Ok(white)
    }

    /// Whitened sub blocks of every dense super block of a video, grouped
    /// by super block. Independent of the model, so it can be computed once
    /// and shared between encoders built on the same whitening.
    pub fn video_subblocks(&self, video: &VideoBlock) -> Result<RowMatrix> {
        let supers = dense_superblocks(video, &self.cfg)?;
        let per = self.cfg.sub_blocks_per_super();
        let mut data = Vec::with_capacity(supers.len() * per * self.whitening.retained_dims());
        for s in &supers {
            data.extend_from_slice(self.whitened_subblocks(s)?.as_slice());
        }
        RowMatrix::from_vec(supers.len() * per, self.whitening.retained_dims(), data)
    }

    /// Concatenated features from precomputed sub blocks, one row per super
    /// block.
    pub fn raw_from_subblocks(&self, subblocks: &RowMatrix) -> Result<RowMatrix> {
        let per = self.cfg.sub_blocks_per_super();
        check_len("sub-block length", subblocks.cols(), self.whitening.retained_dims())?;
        if subblocks.rows() % per != 0 {
            return Err(Error::shape(format!(
                "{} sub blocks do not group into super blocks of {per}",
                subblocks.rows()
            )));
        }
        let n = subblocks.rows() / per;
        let mut out = Vec::with_capacity(n * self.raw_len());
        let mut h = vec![0.0; self.encoder.units()];
        for row in subblocks.iter_rows() {
            self.encoder.encode_into(row, &mut h)?;
            match self.pooling {
                Some(book) => out.extend(book.triangle_activation(&h)?),
                None => out.extend_from_slice(&h),
            }
        }
        RowMatrix::from_vec(n, self.raw_len(), out)
    }

    /// Concatenated sub-block features of one super block.
    pub fn raw_descriptor(&self, super_block: &VideoBlock) -> Result<Vec<f64>> {
        Ok(self.raw_from_subblocks(&self.whitened_subblocks(super_block)?)?.into_vec())
    }

    /// Raw descriptors of every dense super block of a video, one per row.
    pub fn raw_descriptors(&self, video: &VideoBlock) -> Result<RowMatrix> {
        self.raw_from_subblocks(&self.video_subblocks(video)?)
    }

    /// Word histogram from PCA-reduced descriptors.
    pub fn histogram_of(&self, descriptors: &RowMatrix, codebook: &Codebook) -> Result<Histogram> {
        let words: Vec<usize> = descriptors.iter_rows().map(|r| codebook.nearest(r)).collect::<Result<_>>()?;
        Histogram::from_assignments(&words, codebook.k())
    }

    fn require_pca(&self) -> Result<&DescriptorPca> {
        self.pca
            .as_ref()
            .ok_or_else(|| Error::NotFitted("descriptor PCA has not been fitted".into()))
    }

    /// PCA-reduced descriptor of one super block.
    pub fn descriptor(&self, super_block: &VideoBlock) -> Result<Vec<f64>> {
        let pca = self.require_pca()?;
        pca.project(&self.raw_descriptor(super_block)?)
    }

    /// PCA-reduced descriptors of every dense super block of a video.
    pub fn descriptors(&self, video: &VideoBlock) -> Result<RowMatrix> {
        let pca = self.require_pca()?;
        pca.project_rows(&self.raw_descriptors(video)?)
    }

    /// Word histogram of a video against `codebook`.
    pub fn histogram(&self, video: &VideoBlock, codebook: &Codebook) -> Result<Histogram> {
        self.histogram_of(&self.descriptors(video)?, codebook)
    }
}
