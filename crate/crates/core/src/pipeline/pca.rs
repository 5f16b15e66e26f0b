use crate::data::covariance_spectrum;
use crate::error::{check_len, Error, Result};
use crate::linalg::RowMatrix;

/// Plain PCA projection onto the leading principal axes (no rescaling).
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorPca {
    mean: Vec<f64>,
    /// One principal axis per row, by descending variance.
    components: RowMatrix,
    variances: Vec<f64>,
}

impl DescriptorPca {
    pub fn from_parts(mean: Vec<f64>, components: RowMatrix, variances: Vec<f64>) -> Result<Self> {
        check_len("pca mean", mean.len(), components.cols())?;
        check_len("pca variances", variances.len(), components.rows())?;
        if !components.is_finite() {
            return Err(Error::NonFinite("pca components".into()));
        }
        Ok(Self {
            mean,
            components,
            variances,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &RowMatrix {
        &self.components
    }

    /// Variance captured by each retained axis.
    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("descriptor", v.len(), self.input_dim())?;
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        let mut out = vec![0.0; self.output_dim()];
        self.components.mul_vec(&centered, &mut out);
        Ok(out)
    }

    pub fn project_rows(&self, rows: &RowMatrix) -> Result<RowMatrix> {
        check_len("descriptor", rows.cols(), self.input_dim())?;
        let mut out = RowMatrix::zeros(rows.rows(), self.output_dim());
        for i in 0..rows.rows() {
            let p = self.project(rows.row(i))?;
            out.row_mut(i).copy_from_slice(&p);
        }
        Ok(out)
    }
}

/// Fit a `dims`-component PCA to the rows of `descriptors`.
pub fn fit_descriptor_pca(descriptors: &RowMatrix, dims: usize) -> Result<DescriptorPca> {
    if dims == 0 || dims > descriptors.cols() {
        return Err(Error::invalid(format!(
            "pca dims {dims} outside 1..={}",
            descriptors.cols()
        )));
    }
    if descriptors.rows() <= dims {
        return Err(Error::invalid(format!(
            "{} descriptors cannot support {dims} pca dims",
            descriptors.rows()
        )));
    }
    let spec = covariance_spectrum(descriptors)?;
    let rank = spec.numerical_rank();
    if rank < dims {
        return Err(Error::RankDeficient {
            rank,
            requested: dims,
        });
    }
    let d = descriptors.cols();
    let components = RowMatrix::from_fn(dims, d, |k, i| spec.eigenvectors[(i, k)]);
    DescriptorPca::from_parts(spec.mean.clone(), components, spec.eigenvalues[..dims].to_vec())
}
