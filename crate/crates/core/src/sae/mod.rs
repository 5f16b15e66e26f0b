//! Synchrony autoencoder.
//!
//! Pair mode encodes two frames through factor responses `fx = Wx x`,
//! `fy = Wy y` and hiddens `h = σ(fx ⊙ fy + b)`. Reconstruction is
//! cross-gated: `x̂ = Wxᵀ(h ⊙ fy)`, `ŷ = Wyᵀ(h ⊙ fx)`. The contractive
//! penalty is the squared Frobenius norm of `∂h/∂(x, y)`, which has the
//! closed form `Σ_j s_j² (fx_j² ‖Wy_j‖² + fy_j² ‖Wx_j‖²)` with
//! `s = h(1 − h)`.
//!
//! Sequence mode ties the banks: `F = W X`, `H = σ(F² + b)`,
//! `X̂ = Wᵀ(H ⊙ F)`, and the Jacobian norm becomes `Σ_j 4 s_j² F_j² ‖W_j‖²`.
//!
//! Gradients below are derived by hand through the encoder/decoder chain
//! and checked against central differences in [`finite_diff_check`].

mod baseline;
mod train;

pub use baseline::ContractiveAe;
pub use train::{
    finite_diff_check, lambda_sweep, train_model, FdOptions, FdReport, GradientModel, LossParts,
    SaeTrainConfig, SweepResult,
};

use rand_distr::{Distribution, Normal};

use crate::data::{BlockDims, PatchDataset, WhiteningTransform};
use crate::encoder::{FeatureEncoder, Mode};
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy, dot, sigmoid, sq_norm, FilterBank, RowMatrix};
use crate::rng;
use crate::skmeans::TrainingData;

pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
enum Banks {
    /// `wy == None` ties the two banks.
    Pair { wx: FilterBank, wy: Option<FilterBank> },
    Sequence { w: FilterBank },
}

/// Intermediate quantities of one encoding.
///
/// In sequence mode `fx` holds `F` and `fy` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeActivations {
    pub fx: Vec<f64>,
    pub fy: Option<Vec<f64>>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeModel {
    banks: Banks,
    lambda: f64,
    bias: Option<Vec<f64>>,
    frame_dims: BlockDims,
}

/// Per-block gradient of the batch-averaged total loss, in the order of
/// [`GradientModel::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradients {
    pub loss: LossParts,
    pub blocks: Vec<Vec<f64>>,
}

fn gaussian_bank(q: usize, n: usize, r: &mut rng::Rng) -> FilterBank {
    let normal = Normal::new(0.0, (1.0 / n as f64).sqrt()).expect("positive std");
    RowMatrix::from_fn(q, n, |_, _| normal.sample(r))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda {lambda} must be finite and >= 0")));
    }
    Ok(())
}

impl SaeModel {
    /// Pair-mode model. Rows start as `N(0, 1/n)` draws.
    pub fn init_pair(q: usize, n: usize, lambda: f64, tied: bool, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        check_lambda(lambda)?;
        let mut r = rng::seeded(seed);
        let wx = gaussian_bank(q, n, &mut r);
        let wy = (!tied).then(|| gaussian_bank(q, n, &mut r));
        Ok(Self {
            banks: Banks::Pair { wx, wy },
            lambda,
            bias: None,
            frame_dims,
        })
    }

    pub fn init_sequence(q: usize, n: usize, lambda: f64, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        check_lambda(lambda)?;
        let mut r = rng::seeded(seed);
        Ok(Self {
            banks: Banks::Sequence {
                w: gaussian_bank(q, n, &mut r),
            },
            lambda,
            bias: None,
            frame_dims,
        })
    }

    /// `wy = None` builds a tied pair model.
    pub fn from_pair(wx: FilterBank, wy: Option<FilterBank>, lambda: f64, frame_dims: BlockDims) -> Result<Self> {
        check_lambda(lambda)?;
        if let Some(wy) = &wy {
            if wy.rows() != wx.rows() || wy.cols() != wx.cols() {
                return Err(Error::shape("pair banks differ in shape"));
            }
            if !wy.is_finite() {
                return Err(Error::NonFinite("Wy".into()));
            }
        }
        if wx.rows() == 0 || !wx.is_finite() {
            return Err(Error::invalid("Wx must be non-empty and finite"));
        }
        Ok(Self {
            banks: Banks::Pair { wx, wy },
            lambda,
            bias: None,
            frame_dims,
        })
    }

    pub fn from_sequence(w: FilterBank, lambda: f64, frame_dims: BlockDims) -> Result<Self> {
        check_lambda(lambda)?;
        if w.rows() == 0 || !w.is_finite() {
            return Err(Error::invalid("W must be non-empty and finite"));
        }
        Ok(Self {
            banks: Banks::Sequence { w },
            lambda,
            bias: None,
            frame_dims,
        })
    }

    /// Attach a hidden bias (zero if `bias` is `None`).
    pub fn with_bias(mut self, bias: Option<Vec<f64>>) -> Result<Self> {
        let b = bias.unwrap_or_else(|| vec![0.0; self.units()]);
        check_len("bias", b.len(), self.units())?;
        if !all_finite(&b) {
            return Err(Error::NonFinite("bias".into()));
        }
        self.bias = Some(b);
        Ok(self)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        self.lambda = lambda;
        Ok(self)
    }

    pub fn mode(&self) -> Mode {
        match self.banks {
            Banks::Pair { .. } => Mode::Pair,
            Banks::Sequence { .. } => Mode::Sequence,
        }
    }

    pub fn is_tied(&self) -> bool {
        matches!(self.banks, Banks::Sequence { .. } | Banks::Pair { wy: None, .. })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn frame_dims(&self) -> BlockDims {
        self.frame_dims
    }

    pub fn units(&self) -> usize {
        self.banks().0.rows()
    }

    /// Length of one frame (pair mode) or clip (sequence mode).
    pub fn input_len(&self) -> usize {
        self.banks().0.cols()
    }

    /// `(Wx, Wy)` in pair mode (the same bank twice when tied), `(W, W)` in
    /// sequence mode.
    pub fn banks(&self) -> (&FilterBank, &FilterBank) {
        match &self.banks {
            Banks::Pair { wx, wy } => (wx, wy.as_ref().unwrap_or(wx)),
            Banks::Sequence { w } => (w, w),
        }
    }

    fn require(&self, mode: Mode) -> Result<()> {
        if self.mode() != mode {
            return Err(Error::invalid(format!(
                "operation needs a {} model, got {}",
                mode.as_str(),
                self.mode().as_str()
            )));
        }
        Ok(())
    }

    fn bias_at(&self, j: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b[j])
    }

    pub fn encode_pair(&self, x: &[f64], y: &[f64]) -> Result<SaeActivations> {
        self.require(Mode::Pair)?;
        let (wx, wy) = self.banks();
        check_len("x", x.len(), wx.cols())?;
        check_len("y", y.len(), wy.cols())?;
        let fx: Vec<f64> = wx.iter_rows().map(|r| dot(r, x)).collect();
        let fy: Vec<f64> = wy.iter_rows().map(|r| dot(r, y)).collect();
        let h = (0..fx.len())
            .map(|j| sigmoid(fx[j] * fy[j] + self.bias_at(j)))
            .collect();
        Ok(SaeActivations { fx, fy: Some(fy), h })
    }

    pub fn decode_pair(&self, act: &SaeActivations) -> Result<(Vec<f64>, Vec<f64>)> {
        self.require(Mode::Pair)?;
        let (wx, wy) = self.banks();
        let fy = act
            .fy
            .as_ref()
            .ok_or_else(|| Error::invalid("sequence activations given to a pair decoder"))?;
        check_len("activations", act.h.len(), wx.rows())?;
        check_len("activations", act.fx.len(), wx.rows())?;
        check_len("activations", fy.len(), wx.rows())?;
        let mut xh = vec![0.0; wx.cols()];
        let mut yh = vec![0.0; wy.cols()];
        for j in 0..wx.rows() {
            axpy(act.h[j] * fy[j], wx.row(j), &mut xh);
            axpy(act.h[j] * act.fx[j], wy.row(j), &mut yh);
        }
        Ok((xh, yh))
    }

    /// `‖x − x̂‖² + ‖y − ŷ‖²`
    pub fn recon_loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let act = self.encode_pair(x, y)?;
        let (xh, yh) = self.decode_pair(&act)?;
        Ok(sq_err(x, &xh) + sq_err(y, &yh))
    }

    pub fn encode_seq(&self, x: &[f64]) -> Result<SaeActivations> {
        self.require(Mode::Sequence)?;
        let (w, _) = self.banks();
        check_len("X", x.len(), w.cols())?;
        let f: Vec<f64> = w.iter_rows().map(|r| dot(r, x)).collect();
        let h = f
            .iter()
            .enumerate()
            .map(|(j, v)| sigmoid(v * v + self.bias_at(j)))
            .collect();
        Ok(SaeActivations { fx: f, fy: None, h })
    }

    pub fn decode_seq(&self, act: &SaeActivations) -> Result<Vec<f64>> {
        self.require(Mode::Sequence)?;
        let (w, _) = self.banks();
        check_len("activations", act.h.len(), w.rows())?;
        check_len("activations", act.fx.len(), w.rows())?;
        let mut out = vec![0.0; w.cols()];
        for j in 0..w.rows() {
            axpy(act.h[j] * act.fx[j], w.row(j), &mut out);
        }
        Ok(out)
    }

    /// Closed-form squared Frobenius norm of the encoder Jacobian.
    pub fn contraction_penalty(&self, act: &SaeActivations) -> Result<f64> {
        let (wx, wy) = self.banks();
        check_len("activations", act.h.len(), wx.rows())?;
        let mut c = 0.0;
        match (self.mode(), &act.fy) {
            (Mode::Pair, Some(fy)) => {
                for j in 0..wx.rows() {
                    let s = act.h[j] * (1.0 - act.h[j]);
                    let (fx, fyj) = (act.fx[j], fy[j]);
                    c += s * s * (fx * fx * sq_norm(wy.row(j)) + fyj * fyj * sq_norm(wx.row(j)));
                }
            }
            (Mode::Sequence, None) => {
                for j in 0..wx.rows() {
                    let s = act.h[j] * (1.0 - act.h[j]);
                    let f = act.fx[j];
                    c += 4.0 * s * s * f * f * sq_norm(wx.row(j));
                }
            }
            _ => return Err(Error::invalid("activations do not match the model mode")),
        }
        Ok(c)
    }

    /// Reconstruction, contraction and total loss of one clip.
    pub fn loss_seq(&self, x: &[f64]) -> Result<LossParts> {
        let act = self.encode_seq(x)?;
        let xh = self.decode_seq(&act)?;
        let recon = sq_err(x, &xh);
        let contraction = self.contraction_penalty(&act)?;
        Ok(LossParts::new(recon, contraction, self.lambda))
    }

    /// Batch-averaged losses. Pair-mode rows are `[x, y]`.
    pub fn total_loss(&self, batch: &[&[f64]]) -> Result<LossParts> {
        Ok(self.evaluate(batch, false)?.loss)
    }

    /// Analytic gradients of the batch-averaged total loss.
    pub fn gradients(&self, batch: &[&[f64]]) -> Result<SaeGradients> {
        self.evaluate(batch, true)
    }

    fn evaluate(&self, batch: &[&[f64]], want_grad: bool) -> Result<SaeGradients> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let (wx, wy) = self.banks();
        let (q, n) = (wx.rows(), wx.cols());
        let nx: Vec<f64> = wx.iter_rows().map(sq_norm).collect();
        let ny: Vec<f64> = wy.iter_rows().map(sq_norm).collect();
        let mut g = Grads::new(q, n, self.mode(), want_grad, self.bias.is_some());
        let mut recon = 0.0;
        let mut contraction = 0.0;
        for (i, row) in batch.iter().enumerate() {
            let (r, c) = match self.mode() {
                Mode::Pair => {
                    check_len("pair sample", row.len(), 2 * n)?;
                    let (x, y) = row.split_at(n);
                    self.pair_sample(x, y, &nx, &ny, &mut g)
                }
                Mode::Sequence => {
                    check_len("sequence sample", row.len(), n)?;
                    self.seq_sample(row, &nx, &mut g)
                }
            };
            if !(r.is_finite() && c.is_finite()) {
                return Err(Error::NonFinite(format!("activations of batch sample {i}")));
            }
            recon += r;
            contraction += c;
        }
        let scale = 1.0 / batch.len() as f64;
        let loss = LossParts::new(recon * scale, contraction * scale, self.lambda);
        let blocks = if want_grad {
            g.finish(scale, matches!(self.banks, Banks::Pair { wy: None, .. }))
        } else {
            Vec::new()
        };
        Ok(SaeGradients { loss, blocks })
    }

    fn pair_sample(&self, x: &[f64], y: &[f64], nx: &[f64], ny: &[f64], g: &mut Grads) -> (f64, f64) {
        let (wx, wy) = self.banks();
        let (q, n) = (wx.rows(), wx.cols());
        let lam = self.lambda;
        let fx: Vec<f64> = wx.iter_rows().map(|r| dot(r, x)).collect();
        let fy: Vec<f64> = wy.iter_rows().map(|r| dot(r, y)).collect();
        let h: Vec<f64> = (0..q).map(|j| sigmoid(fx[j] * fy[j] + self.bias_at(j))).collect();
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut contraction = 0.0;
        for j in 0..q {
            axpy(h[j] * fy[j], wx.row(j), &mut gx);
            axpy(h[j] * fx[j], wy.row(j), &mut gy);
            let s = h[j] * (1.0 - h[j]);
            contraction += s * s * (fx[j] * fx[j] * ny[j] + fy[j] * fy[j] * nx[j]);
        }
        // gx, gy hold x̂, ŷ; turn them into 2(x̂ − x), 2(ŷ − y)
        let mut recon = 0.0;
        for k in 0..n {
            let (dx, dy) = (gx[k] - x[k], gy[k] - y[k]);
            recon += dx * dx + dy * dy;
            gx[k] = 2.0 * dx;
            gy[k] = 2.0 * dy;
        }
        if !g.enabled {
            return (recon, contraction);
        }
        for j in 0..q {
            let (hj, fxj, fyj) = (h[j], fx[j], fy[j]);
            let s = hj * (1.0 - hj);
            let s2 = s * s;
            let gu = dot(wx.row(j), &gx);
            let gv = dot(wy.row(j), &gy);
            let dh = gu * fyj + gv * fxj;
            let dc_da = 2.0 * s2 * (1.0 - 2.0 * hj) * (fxj * fxj * ny[j] + fyj * fyj * nx[j]);
            let ga = dh * s + lam * dc_da;
            let gfx = gv * hj + ga * fyj + lam * 2.0 * s2 * fxj * ny[j];
            let gfy = gu * hj + ga * fxj + lam * 2.0 * s2 * fyj * nx[j];
            let gwx = g.w.row_mut(j);
            axpy(hj * fyj, &gx, gwx);
            axpy(gfx, x, gwx);
            axpy(lam * 2.0 * s2 * fyj * fyj, wx.row(j), gwx);
            let gwy = g.wy.as_mut().expect("pair grads").row_mut(j);
            axpy(hj * fxj, &gy, gwy);
            axpy(gfy, y, gwy);
            axpy(lam * 2.0 * s2 * fxj * fxj, wy.row(j), gwy);
            if let Some(gb) = g.b.as_mut() {
                gb[j] += ga;
            }
        }
        (recon, contraction)
    }

    fn seq_sample(&self, x: &[f64], nw: &[f64], g: &mut Grads) -> (f64, f64) {
        let (w, _) = self.banks();
        let (q, n) = (w.rows(), w.cols());
        let lam = self.lambda;
        let f: Vec<f64> = w.iter_rows().map(|r| dot(r, x)).collect();
        let h: Vec<f64> = (0..q).map(|j| sigmoid(f[j] * f[j] + self.bias_at(j))).collect();
        let mut gx = vec![0.0; n];
        let mut contraction = 0.0;
        for j in 0..q {
            axpy(h[j] * f[j], w.row(j), &mut gx);
            let s = h[j] * (1.0 - h[j]);
            contraction += 4.0 * s * s * f[j] * f[j] * nw[j];
        }
        let mut recon = 0.0;
        for k in 0..n {
            let d = gx[k] - x[k];
            recon += d * d;
            gx[k] = 2.0 * d;
        }
        if !g.enabled {
            return (recon, contraction);
        }
        for j in 0..q {
            let (hj, fj) = (h[j], f[j]);
            let s = hj * (1.0 - hj);
            let s2 = s * s;
            let gu = dot(w.row(j), &gx);
            let dh = gu * fj;
            let dc_da = 8.0 * s2 * (1.0 - 2.0 * hj) * fj * fj * nw[j];
            let ga = dh * s + lam * dc_da;
            let gf = gu * hj + ga * 2.0 * fj + lam * 8.0 * s2 * fj * nw[j];
            let gw = g.w.row_mut(j);
            axpy(hj * fj, &gx, gw);
            axpy(gf, x, gw);
            axpy(lam * 8.0 * s2 * fj * fj, w.row(j), gw);
            if let Some(gb) = g.b.as_mut() {
                gb[j] += ga;
            }
        }
        (recon, contraction)
    }

    /// Hidden activations for a pair-mode `[x, y]` row or a clip.
    pub fn hiddens(&self, input: &[f64]) -> Result<Vec<f64>> {
        match self.mode() {
            Mode::Pair => {
                check_len("pair input", input.len(), 2 * self.input_len())?;
                let (x, y) = input.split_at(self.input_len());
                Ok(self.encode_pair(x, y)?.h)
            }
            Mode::Sequence => Ok(self.encode_seq(input)?.h),
        }
    }

    /// Whiten `dataset` and train with [`train_model`].
    pub fn train(&mut self, dataset: &PatchDataset, cfg: &SaeTrainConfig, whitening: &WhiteningTransform) -> Result<Vec<LossParts>> {
        let data = TrainingData::prepare(self.mode(), dataset, whitening, self.input_len())?;
        train_model(self, &data.inputs(), cfg)
    }
}

fn sq_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

struct Grads {
    enabled: bool,
    w: RowMatrix,
    wy: Option<RowMatrix>,
    b: Option<Vec<f64>>,
}

impl Grads {
    fn new(q: usize, n: usize, mode: Mode, enabled: bool, bias: bool) -> Self {
        let (r, c) = if enabled { (q, n) } else { (0, 0) };
        Self {
            enabled,
            w: RowMatrix::zeros(r, c),
            wy: (mode == Mode::Pair).then(|| RowMatrix::zeros(r, c)),
            b: (enabled && bias).then(|| vec![0.0; q]),
        }
    }

    fn finish(self, scale: f64, tied_pair: bool) -> Vec<Vec<f64>> {
        let mut w = self.w.into_vec();
        let mut blocks = Vec::new();
        match self.wy {
            Some(wy) if tied_pair => {
                axpy(1.0, wy.as_slice(), &mut w);
                blocks.push(w);
            }
            Some(wy) => {
                blocks.push(w);
                blocks.push(wy.into_vec());
            }
            None => blocks.push(w),
        }
        if let Some(b) = self.b {
            blocks.push(b);
        }
        for b in &mut blocks {
            b.iter_mut().for_each(|v| *v *= scale);
        }
        blocks
    }
}

impl GradientModel for SaeModel {
    fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = match &self.banks {
            Banks::Pair { wx, wy } => {
                let mut v = vec![wx.as_slice()];
                if let Some(wy) = wy {
                    v.push(wy.as_slice());
                }
                v
            }
            Banks::Sequence { w } => vec![w.as_slice()],
        };
        if let Some(b) = &self.bias {
            out.push(b);
        }
        out
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = match &mut self.banks {
            Banks::Pair { wx, wy } => {
                let mut v = vec![wx.as_mut_slice()];
                if let Some(wy) = wy {
                    v.push(wy.as_mut_slice());
                }
                v
            }
            Banks::Sequence { w } => vec![w.as_mut_slice()],
        };
        if let Some(b) = &mut self.bias {
            out.push(b.as_mut_slice());
        }
        out
    }

    fn sample_len(&self) -> usize {
        match self.mode() {
            Mode::Pair => 2 * self.input_len(),
            Mode::Sequence => self.input_len(),
        }
    }

    fn loss(&self, batch: &[&[f64]]) -> Result<LossParts> {
        self.total_loss(batch)
    }

    fn loss_and_gradients(&self, batch: &[&[f64]]) -> Result<(LossParts, Vec<Vec<f64>>)> {
        let g = self.gradients(batch)?;
        Ok((g.loss, g.blocks))
    }
}

impl FeatureEncoder for SaeModel {
    fn input_dim(&self) -> usize {
        self.sample_len()
    }

    fn units(&self) -> usize {
        SaeModel::units(self)
    }

    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("encoder output", out.len(), self.units())?;
        out.copy_from_slice(&self.hiddens(input)?);
        Ok(())
    }
}
