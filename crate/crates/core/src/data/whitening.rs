//! PCA whitening.
//!
//! `forward = Λ^{-1/2} Eᵀ` over the top eigenpairs of the population
//! covariance and `inverse = E Λ^{1/2}`. Retained eigenvalues are clamped
//! from below by a floor relative to the largest eigenvalue.

use nalgebra::DMatrix;

use super::PatchDataset;
use crate::error::{check_len, Error, Result};
use crate::linalg::RowMatrix;

const CHUNK_ROWS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Retained {
    /// Keep exactly this many components.
    Dims(usize),
    /// Keep the fewest leading components explaining this fraction of variance.
    Variance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhiteningConfig {
    pub retained: Retained,
    /// Eigenvalue floor as a fraction of the largest eigenvalue.
    pub eigenvalue_floor: f64,
}

impl Default for WhiteningConfig {
    fn default() -> Self {
        Self {
            retained: Retained::Variance(0.99),
            eigenvalue_floor: 1e-8,
        }
    }
}

/// Mean and descending eigen-decomposition of a sample covariance.
#[derive(Debug, Clone)]
pub struct CovarianceSpectrum {
    pub mean: Vec<f64>,
    /// Eigenvalues in descending order.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub samples: usize,
}

impl CovarianceSpectrum {
    /// Eigenvalues above `max * dim * eps` count toward the numerical rank.
    pub fn numerical_rank(&self) -> usize {
        let max = self.eigenvalues.first().copied().unwrap_or(0.0);
        let tol = max * self.eigenvalues.len() as f64 * f64::EPSILON;
        self.eigenvalues.iter().take_while(|&&l| l > tol && max > 0.0).count()
    }

    pub fn dims_for_variance(&self, fraction: f64) -> usize {
        let total: f64 = self.eigenvalues.iter().filter(|l| **l > 0.0).sum();
        let mut acc = 0.0;
        for (i, l) in self.eigenvalues.iter().enumerate() {
            acc += l.max(0.0);
            if acc >= fraction * total {
                return i + 1;
            }
        }
        self.eigenvalues.len()
    }
}

/// Population covariance of the rows of `samples`, decomposed.
pub fn covariance_spectrum(samples: &RowMatrix) -> Result<CovarianceSpectrum> {
    let (n, dim) = (samples.rows(), samples.cols());
    if n == 0 || dim == 0 {
        return Err(Error::invalid("covariance of an empty sample set"));
    }
    let mut mean = vec![0.0; dim];
    for row in samples.iter_rows() {
        crate::linalg::axpy(1.0, row, &mut mean);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut start = 0;
    while start < n {
        let rows = CHUNK_ROWS.min(n - start);
        let chunk = DMatrix::from_fn(rows, dim, |i, j| samples.get(start + i, j) - mean[j]);
        cov.gemm_tr(1.0, &chunk, &chunk, 1.0);
        start += rows;
    }
    cov /= n as f64;
    // Symmetrise away round-off before the eigen solver.
    let cov = (&cov + cov.transpose()) * 0.5;

    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    // Fix each axis' sign so its largest-magnitude entry is positive.
    for mut col in eigenvectors.column_iter_mut() {
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    Ok(CovarianceSpectrum {
        mean,
        eigenvalues,
        eigenvectors,
        samples: n,
    })
}

#[derive(Debug, Clone)]
pub struct WhiteningTransform {
    mean: Vec<f64>,
    forward: RowMatrix,
    inverse: RowMatrix,
    eigenvalue_floor: f64,
    /// Full descending spectrum of the training covariance.
    spectrum: Vec<f64>,
    // cached forwardᵀ for batch products
    forward_t: DMatrix<f64>,
}

impl PartialEq for WhiteningTransform {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean
            && self.forward == other.forward
            && self.inverse == other.inverse
            && self.eigenvalue_floor == other.eigenvalue_floor
            && self.spectrum == other.spectrum
    }
}

impl WhiteningTransform {
    pub fn from_parts(
        mean: Vec<f64>,
        forward: RowMatrix,
        inverse: RowMatrix,
        eigenvalue_floor: f64,
        spectrum: Vec<f64>,
    ) -> Result<Self> {
        let n = mean.len();
        check_len("whitening forward columns", forward.cols(), n)?;
        check_len("whitening inverse rows", inverse.rows(), n)?;
        check_len("whitening inverse columns", inverse.cols(), forward.rows())?;
        if forward.rows() > n {
            return Err(Error::shape("retained dims exceed input dims"));
        }
        let forward_t = forward.to_dmatrix().transpose();
        Ok(Self {
            mean,
            forward,
            inverse,
            eigenvalue_floor,
            spectrum,
            forward_t,
        })
    }

    /// Fit on the rows of `samples`.
    pub fn fit(samples: &RowMatrix, cfg: &WhiteningConfig) -> Result<Self> {
        let spec = covariance_spectrum(samples)?;
        Self::from_spectrum(&spec, cfg)
    }

    pub fn from_spectrum(spec: &CovarianceSpectrum, cfg: &WhiteningConfig) -> Result<Self> {
        let dim = spec.mean.len();
        let rank = spec.numerical_rank();
        let retained = match cfg.retained {
            Retained::Dims(d) => {
                if d == 0 || d > dim {
                    return Err(Error::invalid(format!(
                        "retained dims {d} outside 1..={dim}"
                    )));
                }
                if d > rank {
                    return Err(Error::RankDeficient { rank, requested: d });
                }
                d
            }
            Retained::Variance(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid(format!("variance fraction {f} outside (0, 1]")));
                }
                if rank == 0 {
                    return Err(Error::RankDeficient { rank, requested: 1 });
                }
                spec.dims_for_variance(f).min(rank)
            }
        };
        if spec.samples <= retained {
            return Err(Error::invalid(format!(
                "{} samples cannot support {retained} retained dims",
                spec.samples
            )));
        }
        let floor = cfg.eigenvalue_floor * spec.eigenvalues[0];
        let mut forward = RowMatrix::zeros(retained, dim);
        let mut inverse = RowMatrix::zeros(dim, retained);
        for k in 0..retained {
            let lambda = spec.eigenvalues[k].max(floor);
            let (down, up) = (1.0 / lambda.sqrt(), lambda.sqrt());
            for i in 0..dim {
                let e = spec.eigenvectors[(i, k)];
                forward.set(k, i, e * down);
                inverse.set(i, k, e * up);
            }
        }
        Self::from_parts(spec.mean.clone(), forward, inverse, floor, spec.eigenvalues.clone())
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn retained_dims(&self) -> usize {
        self.forward.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn forward(&self) -> &RowMatrix {
        &self.forward
    }

    pub fn inverse(&self) -> &RowMatrix {
        &self.inverse
    }

    pub fn eigenvalue_floor(&self) -> f64 {
        self.eigenvalue_floor
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("whitening input", x.len(), self.input_dim())?;
        let centered: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = vec![0.0; self.retained_dims()];
        self.forward.mul_vec(&centered, &mut out);
        Ok(out)
    }

    pub fn apply_inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len("whitened input", y.len(), self.retained_dims())?;
        let mut out = vec![0.0; self.input_dim()];
        self.inverse.mul_vec(y, &mut out);
        out.iter_mut().zip(&self.mean).for_each(|(o, m)| *o += m);
        Ok(out)
    }

    /// Whiten every row of `samples`.
    pub fn apply_rows(&self, samples: &RowMatrix) -> Result<RowMatrix> {
        check_len("whitening input", samples.cols(), self.input_dim())?;
        let n = samples.rows();
        let d = self.retained_dims();
        let mut out = Vec::with_capacity(n * d);
        let mut start = 0;
        while start < n {
            let rows = CHUNK_ROWS.min(n - start);
            let chunk = DMatrix::from_fn(rows, self.input_dim(), |i, j| {
                samples.get(start + i, j) - self.mean[j]
            });
            let proj = chunk * &self.forward_t;
            for i in 0..rows {
                out.extend(proj.row(i).iter().copied());
            }
            start += rows;
        }
        RowMatrix::from_vec(n, d, out)
    }

    /// Whiten blocks given as f32 slices (all of input length).
    pub fn apply_blocks<'a>(&self, blocks: impl ExactSizeIterator<Item = &'a [f32]>) -> Result<RowMatrix> {
        let n = blocks.len();
        let dim = self.input_dim();
        let mut data = Vec::with_capacity(n * dim);
        for b in blocks {
            check_len("whitening input", b.len(), dim)?;
            data.extend(b.iter().map(|&v| v as f64));
        }
        self.apply_rows(&RowMatrix::from_vec(n, dim, data)?)
    }
}

/// Fit whitening on the flattened patches of a dataset.
pub fn fit_whitening(patches: &PatchDataset, cfg: &WhiteningConfig) -> Result<WhiteningTransform> {
    if patches.is_empty() {
        return Err(Error::invalid("cannot fit whitening on an empty dataset"));
    }
    WhiteningTransform::fit(&patches.to_matrix(), cfg)
}
