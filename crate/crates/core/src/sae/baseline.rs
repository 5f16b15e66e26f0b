//! Standard contractive autoencoder, the non-gated baseline.
//!
//! `h = σ(W x + b)`, `x̂ = Wᵀ h + c`, penalty `Σ_j (h_j(1 − h_j))² ‖W_j‖²`.

use rand_distr::{Distribution, Normal};

use super::train::{GradientModel, LossParts};
use crate::data::BlockDims;
use crate::encoder::FeatureEncoder;
use crate::error::{check_len, Error, Result};
use crate::linalg::{axpy, dot, sigmoid, sq_norm, FilterBank, RowMatrix};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ContractiveAe {
    w: FilterBank,
    b: Vec<f64>,
    c: Vec<f64>,
    lambda: f64,
    frame_dims: BlockDims,
}

impl ContractiveAe {
    pub fn init(q: usize, n: usize, lambda: f64, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        let normal = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive std");
        let mut r = rng::seeded(seed);
        let w = RowMatrix::from_fn(q, n, |_, _| normal.sample(&mut r));
        Self::from_parts(w, vec![0.0; q], vec![0.0; n], lambda, frame_dims)
    }

    pub fn from_parts(w: FilterBank, b: Vec<f64>, c: Vec<f64>, lambda: f64, frame_dims: BlockDims) -> Result<Self> {
        check_len("hidden bias", b.len(), w.rows())?;
        check_len("visible bias", c.len(), w.cols())?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda {lambda} must be finite and >= 0")));
        }
        if w.rows() == 0 || !w.is_finite() || !crate::linalg::all_finite(&b) || !crate::linalg::all_finite(&c) {
            return Err(Error::invalid("weights must be non-empty and finite"));
        }
        Ok(Self {
            w,
            b,
            c,
            lambda,
            frame_dims,
        })
    }

    pub fn weights(&self) -> &FilterBank {
        &self.w
    }

    pub fn hidden_bias(&self) -> &[f64] {
        &self.b
    }

    pub fn visible_bias(&self) -> &[f64] {
        &self.c
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn frame_dims(&self) -> BlockDims {
        self.frame_dims
    }

    pub fn hiddens(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("input", x.len(), self.w.cols())?;
        Ok(self
            .w
            .iter_rows()
            .zip(&self.b)
            .map(|(r, b)| sigmoid(dot(r, x) + b))
            .collect())
    }

    fn evaluate(&self, batch: &[&[f64]], want: bool) -> Result<(LossParts, Vec<Vec<f64>>)> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let (q, n) = (self.w.rows(), self.w.cols());
        let norms: Vec<f64> = self.w.iter_rows().map(sq_norm).collect();
        let mut gw = RowMatrix::zeros(if want { q } else { 0 }, n);
        let mut gb = vec![0.0; q];
        let mut gc = vec![0.0; n];
        let (mut recon, mut contraction) = (0.0, 0.0);
        let lam = self.lambda;
        for (i, x) in batch.iter().enumerate() {
            let h = self.hiddens(x)?;
            let mut g = self.c.clone();
            for j in 0..q {
                axpy(h[j], self.w.row(j), &mut g);
                let s = h[j] * (1.0 - h[j]);
                contraction += s * s * norms[j];
            }
            for k in 0..n {
                let d = g[k] - x[k];
                recon += d * d;
                g[k] = 2.0 * d;
            }
            if !(recon.is_finite() && contraction.is_finite()) {
                return Err(Error::NonFinite(format!("activations of batch sample {i}")));
            }
            if !want {
                continue;
            }
            axpy(1.0, &g, &mut gc);
            for j in 0..q {
                let s = h[j] * (1.0 - h[j]);
                let s2 = s * s;
                let dh = dot(self.w.row(j), &g);
                let ga = dh * s + lam * 2.0 * s2 * (1.0 - 2.0 * h[j]) * norms[j];
                let row = gw.row_mut(j);
                axpy(h[j], &g, row);
                axpy(ga, x, row);
                axpy(lam * 2.0 * s2, self.w.row(j), row);
                gb[j] += ga;
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let loss = LossParts::new(recon * scale, contraction * scale, lam);
        if !want {
            return Ok((loss, Vec::new()));
        }
        let mut blocks = vec![gw.into_vec(), gb, gc];
        for b in &mut blocks {
            b.iter_mut().for_each(|v| *v *= scale);
        }
        Ok((loss, blocks))
    }
}

impl GradientModel for ContractiveAe {
    fn param_blocks(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), &self.b, &self.c]
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b, &mut self.c]
    }

    fn sample_len(&self) -> usize {
        self.w.cols()
    }

    fn loss(&self, batch: &[&[f64]]) -> Result<LossParts> {
        Ok(self.evaluate(batch, false)?.0)
    }

    fn loss_and_gradients(&self, batch: &[&[f64]]) -> Result<(LossParts, Vec<Vec<f64>>)> {
        for x in batch {
            check_len("input", x.len(), self.w.cols())?;
        }
        self.evaluate(batch, true)
    }
}

impl FeatureEncoder for ContractiveAe {
    fn input_dim(&self) -> usize {
        self.w.cols()
    }

    fn units(&self) -> usize {
        self.w.rows()
    }

    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("encoder output", out.len(), self.w.rows())?;
        out.copy_from_slice(&self.hiddens(input)?);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sae::{finite_diff_check, FdOptions};

    #[test]
    fn gradients_match_central_differences() {
        for lambda in [0.0, 0.5, 2.0] {
            let m = ContractiveAe::init(5, 7, lambda, BlockDims::new(7, 1, 1), 4).unwrap();
            let rows: Vec<Vec<f64>> = (0..6).map(|i| (0..7).map(|k| ((3 * i + k) as f64 * 0.7).sin()).collect()).collect();
            let batch: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let rep = finite_diff_check(&m, &batch, &FdOptions::default()).unwrap();
            assert!(rep.max_rel_error < 1e-5, "lambda {lambda}: {rep:?}");
        }
    }
}
