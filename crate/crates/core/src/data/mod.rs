//! Video blocks, patch corpora and preprocessing.

mod crop;
mod synth;
mod whitening;

pub use crop::{crop_block, crop_blocks, grid_count};
pub use synth::{
    generate_direction_clips, generate_sinusoid_pair, generate_translating_patches,
    synthetic_images, Direction, ShiftLabel,
};
pub use whitening::{
    covariance_spectrum, fit_whitening, CovarianceSpectrum, Retained, WhiteningConfig,
    WhiteningTransform,
};

use crate::error::{Error, Result};

/// Extent of a block along (time, rows, cols).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockDims {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl BlockDims {
    pub const fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }

    pub const fn len(&self) -> usize {
        self.t * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn frame_len(&self) -> usize {
        self.h * self.w
    }

    pub fn fits_in(&self, outer: &BlockDims) -> bool {
        self.t <= outer.t && self.h <= outer.h && self.w <= outer.w
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.t, self.h, self.w]
    }
}

impl std::fmt::Display for BlockDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.t, self.h, self.w)
    }
}

/// Dense `T x H x W` clip or patch, frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoBlock {
    dims: BlockDims,
    values: Vec<f32>,
}

impl VideoBlock {
    pub fn new(dims: BlockDims, values: Vec<f32>) -> Result<Self> {
        if dims.t == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::invalid(format!("block dims {dims} must all be >= 1")));
        }
        if values.len() != dims.len() {
            return Err(Error::shape(format!(
                "block {dims} needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("block value at flat index {i}")));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: BlockDims) -> Result<Self> {
        Self::new(dims, vec![0.0; dims.len()])
    }

    pub fn from_fn(dims: BlockDims, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut values = Vec::with_capacity(dims.len());
        for t in 0..dims.t {
            for r in 0..dims.h {
                for c in 0..dims.w {
                    values.push(f(t, r, c));
                }
            }
        }
        Self::new(dims, values)
    }

    #[inline]
    pub fn dims(&self) -> BlockDims {
        self.dims
    }

    #[inline]
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, t: usize, r: usize, c: usize) -> f32 {
        self.values[(t * self.dims.h + r) * self.dims.w + c]
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.dims.frame_len();
        &self.values[t * n..(t + 1) * n]
    }

    /// Flattened values widened to f64, in the canonical frame-major order.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// A corpus of equally sized blocks with optional integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchDataset {
    patches: Vec<VideoBlock>,
    labels: Option<Vec<u32>>,
    seed: u64,
}

impl PatchDataset {
    pub fn new(patches: Vec<VideoBlock>, labels: Option<Vec<u32>>, seed: u64) -> Result<Self> {
        if let Some(first) = patches.first() {
            let d = first.dims();
            if let Some(i) = patches.iter().position(|p| p.dims() != d) {
                return Err(Error::shape(format!(
                    "patch {i} has dims {}, expected {d}",
                    patches[i].dims()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != patches.len() {
                return Err(Error::shape(format!(
                    "{} labels for {} patches",
                    l.len(),
                    patches.len()
                )));
            }
        }
        Ok(Self {
            patches,
            labels,
            seed,
        })
    }

    pub fn patches(&self) -> &[VideoBlock] {
        &self.patches
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_deref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn dims(&self) -> Option<BlockDims> {
        self.patches.first().map(VideoBlock::dims)
    }

    /// Subset by index, keeping labels aligned.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let patches = indices.iter().map(|&i| self.patches[i].clone()).collect();
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Self::new(patches, labels, self.seed)
    }

    /// All patches flattened into the rows of a sample matrix.
    pub fn to_matrix(&self) -> crate::linalg::RowMatrix {
        let n = self.dims().map_or(0, |d| d.len());
        let mut data = Vec::with_capacity(self.len() * n);
        for p in &self.patches {
            data.extend(p.values().iter().map(|&v| v as f64));
        }
        crate::linalg::RowMatrix::from_vec(self.len(), n, data).expect("uniform patch dims")
    }
}

/// `(v - mean(v)) / max(||v - mean(v)||, epsilon)`
pub fn contrast_normalize(v: &[f64], epsilon: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    contrast_normalize_in_place(&mut out, epsilon);
    out
}

pub fn contrast_normalize_in_place(v: &mut [f64], epsilon: f64) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let scale = 1.0 / crate::linalg::norm(v).max(epsilon);
    v.iter_mut().for_each(|x| *x *= scale);
}
