//! Orthogonal warps, the synchrony test and gated product units.
//!
//! A pair of filters `w2 = P w1` related by an orthogonal warp `P` gives
//! equal responses `w1ᵀx1 == w2ᵀx2` whenever `x2 = P x1`. Product and
//! energy units turn that equality into a large response; a thresholded
//! weighted sum cannot.

use crate::error::{check_len, Error, Result};
use crate::linalg::{dot, RowMatrix};

/// Relative tolerance for response equality.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Responses below this magnitude make the verdict indeterminate.
pub const DEFAULT_FLOOR: f64 = 1e-8;

/// Orthogonal transformation of a vector space.
pub trait OrthogonalWarp {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>>;
}

/// Permutation warp. `mapping[i]` is the destination of index `i`, so the
/// implied matrix has `P[mapping[i], i] = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpOperator {
    mapping: Vec<usize>,
}

impl WarpOperator {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for (i, &m) in mapping.iter().enumerate() {
            if m >= n || seen[m] {
                return Err(Error::invalid(format!(
                    "mapping is not a bijection: index {i} maps to {m}"
                )));
            }
            seen[m] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mapping: (0..n).collect(),
        }
    }

    /// Circular shift right by `offset`: `mapping[i] = (i + offset) mod n`.
    pub fn shift(n: usize, offset: i64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("warp dimension must be >= 1"));
        }
        let ni = n as i64;
        let off = offset.rem_euclid(ni);
        Ok(Self {
            mapping: (0..ni).map(|i| ((i + off) % ni) as usize).collect(),
        })
    }

    /// Circular translation of a row-major `rows x cols` image by
    /// `(dy, dx)`.
    pub fn shift_2d(rows: usize, cols: usize, dy: i64, dx: i64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("warp dimensions must be >= 1"));
        }
        let (ri, ci) = (rows as i64, cols as i64);
        let mut mapping = Vec::with_capacity(rows * cols);
        for r in 0..ri {
            for c in 0..ci {
                let rr = (r + dy).rem_euclid(ri);
                let cc = (c + dx).rem_euclid(ci);
                mapping.push((rr * ci + cc) as usize);
            }
        }
        Ok(Self { mapping })
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &WarpOperator) -> Result<Self> {
        check_len("composed warp", other.len(), self.len())?;
        Ok(Self {
            mapping: other.mapping.iter().map(|&m| self.mapping[m]).collect(),
        })
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.len()];
        for (i, &m) in self.mapping.iter().enumerate() {
            inv[m] = i;
        }
        Self { mapping: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &m)| i == m)
    }
}

impl OrthogonalWarp for WarpOperator {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("warp input", v.len(), self.len())?;
        let mut out = vec![0.0; v.len()];
        for (&m, &x) in self.mapping.iter().zip(v) {
            out[m] = x;
        }
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("warp input", v.len(), self.len())?;
        Ok(self.mapping.iter().map(|&m| v[m]).collect())
    }
}

pub fn apply_warp(p: &impl OrthogonalWarp, v: &[f64]) -> Result<Vec<f64>> {
    p.apply(v)
}

pub fn apply_warp_transpose(p: &impl OrthogonalWarp, v: &[f64]) -> Result<Vec<f64>> {
    p.apply_transpose(v)
}

/// General orthogonal matrix, accepted when `‖PᵀP − I‖_F < 1e-10`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseWarp {
    matrix: RowMatrix,
}

impl DenseWarp {
    pub const ORTHOGONALITY_TOL: f64 = 1e-10;

    pub fn new(matrix: RowMatrix) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::shape(format!("warp matrix is {}x{}", n, matrix.cols())));
        }
        let m = matrix.to_dmatrix();
        let g = m.transpose() * &m - nalgebra::DMatrix::<f64>::identity(n, n);
        let dev = g.norm();
        if !(dev < Self::ORTHOGONALITY_TOL) {
            return Err(Error::invalid(format!("matrix is not orthogonal: ‖PᵀP − I‖ = {dev:e}")));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &RowMatrix {
        &self.matrix
    }
}

impl OrthogonalWarp for DenseWarp {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("warp input", v.len(), self.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.matrix.mul_vec(v, &mut out);
        Ok(out)
    }

    fn apply_transpose(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("warp input", v.len(), self.dim())?;
        let mut out = vec![0.0; self.dim()];
        self.matrix.tr_mul_vec(v, &mut out);
        Ok(out)
    }
}

/// Two filters applied to consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterPair {
    w1: Vec<f64>,
    w2: Vec<f64>,
}

impl FilterPair {
    pub fn new(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        check_len("second filter", w2.len(), w1.len())?;
        if !crate::linalg::all_finite(&w1) || !crate::linalg::all_finite(&w2) {
            return Err(Error::NonFinite("filter pair entry".into()));
        }
        Ok(Self { w1, w2 })
    }

    /// `(w1, P w1)`
    pub fn related(w1: Vec<f64>, p: &impl OrthogonalWarp) -> Result<Self> {
        let w2 = p.apply(&w1)?;
        Self::new(w1, w2)
    }

    pub fn w1(&self) -> &[f64] {
        &self.w1
    }

    pub fn w2(&self) -> &[f64] {
        &self.w2
    }

    fn responses(&self, x1: &[f64], x2: &[f64]) -> Result<(f64, f64)> {
        check_len("first frame", x1.len(), self.w1.len())?;
        check_len("second frame", x2.len(), self.w2.len())?;
        Ok((dot(&self.w1, x1), dot(&self.w2, x2)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynchronyVerdict {
    Synchronous,
    Asynchronous,
    /// Every response is below the floor, so equality says nothing.
    Indeterminate,
}

fn verdict(responses: &[f64], tol: f64, floor: f64) -> SynchronyVerdict {
    let scale = responses.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if scale < floor {
        return SynchronyVerdict::Indeterminate;
    }
    let lo = responses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = responses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= tol * scale {
        SynchronyVerdict::Synchronous
    } else {
        SynchronyVerdict::Asynchronous
    }
}

pub fn check_synchrony(pair: &FilterPair, x1: &[f64], x2: &[f64], tol: f64, floor: f64) -> Result<SynchronyVerdict> {
    let (a, b) = pair.responses(x1, x2)?;
    Ok(verdict(&[a, b], tol, floor))
}

/// `(w1ᵀx1)(w2ᵀx2)`
pub fn product_response(pair: &FilterPair, x1: &[f64], x2: &[f64]) -> Result<f64> {
    let (a, b) = pair.responses(x1, x2)?;
    Ok(a * b)
}

/// `w1ᵀx1 + w2ᵀx2 >= threshold`. Kept to show that a weighted sum confuses
/// a synchronous pair with a one-sided match.
pub fn thresholded_sum_response(pair: &FilterPair, x1: &[f64], x2: &[f64], threshold: f64) -> Result<bool> {
    let (a, b) = pair.responses(x1, x2)?;
    Ok(a + b >= threshold)
}

/// Per-frame responses `wᵢᵀxᵢ`.
pub fn frame_responses(filters: &[Vec<f64>], frames: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_len("frame list", frames.len(), filters.len())?;
    if filters.len() < 2 {
        return Err(Error::invalid(format!(
            "sequence needs at least 2 frames, got {}",
            filters.len()
        )));
    }
    let n = filters[0].len();
    filters
        .iter()
        .zip(frames)
        .enumerate()
        .map(|(i, (w, x))| {
            check_len(&format!("filter {i}"), w.len(), n)?;
            check_len(&format!("frame {i}"), x.len(), n)?;
            Ok(dot(w, x))
        })
        .collect()
}

/// All per-frame responses equal within relative `tol`.
pub fn sequence_synchrony(filters: &[Vec<f64>], frames: &[Vec<f64>], tol: f64, floor: f64) -> Result<SynchronyVerdict> {
    let r = frame_responses(filters, frames)?;
    Ok(verdict(&r, tol, floor))
}

/// `(Σᵢ wᵢᵀxᵢ)²`
pub fn energy_response(filters: &[Vec<f64>], frames: &[Vec<f64>]) -> Result<f64> {
    let r = frame_responses(filters, frames)?;
    let s: f64 = r.iter().sum();
    Ok(s * s)
}
