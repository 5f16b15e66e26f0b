//! Synchrony K-means.
//!
//! Each unit owns a filter per frame. Assignment multiplies the frame
//! responses, so a unit wins only when both frames match its (transformed)
//! filters. The learning rule is a gated Hebbian term minus an active
//! forgetting term:
//!
//! ```text
//! ΔWx_s = η (x · c − Wx_s · c²),   c = Wy_sᵀ y
//! ΔWy_s = η (y · d − Wy_s · d²),   d = Wx_sᵀ x
//! ```
//!
//! Differentiating `L_x = ‖x − Wx_s c‖²` gives `∂L_x/∂Wx_s = −2 (x c − Wx_s c²)`,
//! so the rule is gradient descent with the constant folded into `η`.
//!
//! The sequence variant ties the two banks and replaces the frames by the
//! concatenated clip `X`, assigning by `argmax_q (W_qᵀX)²`.

use rand_distr::{Distribution, StandardNormal};

use crate::data::{contrast_normalize_in_place, BlockDims, PatchDataset, WhiteningTransform};
use crate::encoder::{FeatureEncoder, Mode};
use crate::error::{check_len, Error, Result};
use crate::linalg::{all_finite, axpy, dot, sigmoid, sq_dist, FilterBank, RowMatrix};
use crate::rng;

pub const NORMALIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Re-normalise touched rows every this many updates (0 disables).
    pub normalize_every: usize,
    /// Multiplier applied to `eta` after each epoch.
    pub eta_decay: f64,
    /// Scale each training sample (each frame in pair mode) to unit norm
    /// before its update. Assignments are unaffected; the step then stays
    /// bounded by `eta` whatever the input dimension.
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eta: 0.01,
            epochs: 5,
            seed: 0,
            normalize_every: 1000,
            eta_decay: 0.95,
            normalize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!("eta {} must be finite and >= 0", self.eta)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if !(self.eta_decay > 0.0 && self.eta_decay.is_finite()) {
            return Err(Error::invalid(format!("eta_decay {} must be > 0", self.eta_decay)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Banks {
    Pair { wx: FilterBank, wy: FilterBank },
    Sequence { w: FilterBank },
}

/// Reconstruction losses of the assigned unit in pair mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairLoss {
    pub lx: f64,
    pub ly: f64,
}

impl PairLoss {
    pub fn total(&self) -> f64 {
        self.lx + self.ly
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkMeansModel {
    banks: Banks,
    frame_dims: BlockDims,
}

fn random_bank(q: usize, n: usize, rng: &mut rng::Rng) -> FilterBank {
    let mut bank = RowMatrix::from_fn(q, n, |_, _| StandardNormal.sample(rng));
    for i in 0..q {
        contrast_normalize_in_place(bank.row_mut(i), NORMALIZE_EPS);
    }
    bank
}

/// Index of the largest value; the lowest index wins ties and NaNs never win.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

impl SkMeansModel {
    /// Pair-mode model with `q` units over frames of length `n`.
    pub fn init_pair(q: usize, n: usize, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        let mut r = rng::seeded(seed);
        let wx = random_bank(q, n, &mut r);
        let wy = random_bank(q, n, &mut r);
        Ok(Self {
            banks: Banks::Pair { wx, wy },
            frame_dims,
        })
    }

    /// Sequence-mode model with `q` units over clips of length `n`.
    pub fn init_sequence(q: usize, n: usize, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        let mut r = rng::seeded(seed);
        Ok(Self {
            banks: Banks::Sequence {
                w: random_bank(q, n, &mut r),
            },
            frame_dims,
        })
    }

    pub fn from_pair(wx: FilterBank, wy: FilterBank, frame_dims: BlockDims) -> Result<Self> {
        if wx.rows() != wy.rows() || wx.cols() != wy.cols() {
            return Err(Error::shape("pair banks differ in shape"));
        }
        if wx.rows() == 0 || !wx.is_finite() || !wy.is_finite() {
            return Err(Error::invalid("pair banks must be non-empty and finite"));
        }
        Ok(Self {
            banks: Banks::Pair { wx, wy },
            frame_dims,
        })
    }

    pub fn from_sequence(w: FilterBank, frame_dims: BlockDims) -> Result<Self> {
        if w.rows() == 0 || !w.is_finite() {
            return Err(Error::invalid("bank must be non-empty and finite"));
        }
        Ok(Self {
            banks: Banks::Sequence { w },
            frame_dims,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.banks {
            Banks::Pair { .. } => Mode::Pair,
            Banks::Sequence { .. } => Mode::Sequence,
        }
    }

    pub fn units(&self) -> usize {
        self.banks().0.rows()
    }

    /// Length of one input vector (a frame in pair mode, a clip otherwise).
    pub fn input_len(&self) -> usize {
        self.banks().0.cols()
    }

    /// Pixel-space extent of the blocks the model was trained on.
    pub fn frame_dims(&self) -> BlockDims {
        self.frame_dims
    }

    /// `(Wx, Some(Wy))` in pair mode, `(W, None)` in sequence mode.
    pub fn banks(&self) -> (&FilterBank, Option<&FilterBank>) {
        match &self.banks {
            Banks::Pair { wx, wy } => (wx, Some(wy)),
            Banks::Sequence { w } => (w, None),
        }
    }

    fn pair_banks(&self) -> Result<(&FilterBank, &FilterBank)> {
        match &self.banks {
            Banks::Pair { wx, wy } => Ok((wx, wy)),
            Banks::Sequence { .. } => Err(Error::invalid("operation needs a pair-mode model")),
        }
    }

    fn seq_bank(&self) -> Result<&FilterBank> {
        match &self.banks {
            Banks::Sequence { w } => Ok(w),
            Banks::Pair { .. } => Err(Error::invalid("operation needs a sequence-mode model")),
        }
    }

    /// `argmax_q (Wx_q·x)(Wy_q·y)`
    pub fn assign_pair(&self, x: &[f64], y: &[f64]) -> Result<usize> {
        let (wx, wy) = self.pair_banks()?;
        check_len("x", x.len(), wx.cols())?;
        check_len("y", y.len(), wy.cols())?;
        Ok(argmax(
            wx.iter_rows().zip(wy.iter_rows()).map(|(a, b)| dot(a, x) * dot(b, y)),
        ))
    }

    /// `argmax_q (W_q·X)²`
    pub fn assign_seq(&self, x: &[f64]) -> Result<usize> {
        let w = self.seq_bank()?;
        check_len("X", x.len(), w.cols())?;
        Ok(argmax(w.iter_rows().map(|r| {
            let f = dot(r, x);
            f * f
        })))
    }

    /// `L_x = ‖x − Wx_s (Wy_s·y)‖²` and `L_y = ‖y − Wy_s (Wx_s·x)‖²`.
    pub fn loss_pair(&self, s: usize, x: &[f64], y: &[f64]) -> Result<PairLoss> {
        let (wx, wy) = self.pair_banks()?;
        if s >= wx.rows() {
            return Err(Error::invalid(format!("unit {s} out of range for {} units", wx.rows())));
        }
        check_len("x", x.len(), wx.cols())?;
        check_len("y", y.len(), wy.cols())?;
        let (ax, ay) = (wx.row(s), wy.row(s));
        let c = dot(ay, y);
        let d = dot(ax, x);
        let lx = x.iter().zip(ax).map(|(xi, wi)| (xi - wi * c).powi(2)).sum();
        let ly = y.iter().zip(ay).map(|(yi, wi)| (yi - wi * d).powi(2)).sum();
        Ok(PairLoss { lx, ly })
    }

    /// `‖X − W_s (W_s·X)‖²`
    pub fn loss_seq(&self, s: usize, x: &[f64]) -> Result<f64> {
        let w = self.seq_bank()?;
        if s >= w.rows() {
            return Err(Error::invalid(format!("unit {s} out of range for {} units", w.rows())));
        }
        check_len("X", x.len(), w.cols())?;
        let ws = w.row(s);
        let r = dot(ws, x);
        Ok(x.iter().zip(ws).map(|(xi, wi)| (xi - wi * r).powi(2)).sum())
    }

    /// One online step on a frame pair. Both rows of the winner are updated
    /// from the pre-update weights. Returns the winner and `L_x + L_y`
    /// before the update.
    pub fn update_pair(&mut self, x: &[f64], y: &[f64], eta: f64) -> Result<(usize, f64)> {
        if !all_finite(x) || !all_finite(y) || !eta.is_finite() {
            return Err(Error::NonFinite("update_pair input".into()));
        }
        let s = self.assign_pair(x, y)?;
        let loss = self.loss_pair(s, x, y)?.total();
        let Banks::Pair { wx, wy } = &mut self.banks else {
            unreachable!("assign_pair checked the mode")
        };
        let c = dot(wy.row(s), y);
        let d = dot(wx.row(s), x);
        gated_step(wx.row_mut(s), x, c, eta);
        gated_step(wy.row_mut(s), y, d, eta);
        Ok((s, loss))
    }

    /// One online step on a clip: `ΔW_s = η (X r − W_s r²)`, `r = W_s·X`.
    pub fn update_seq(&mut self, x: &[f64], eta: f64) -> Result<(usize, f64)> {
        if !all_finite(x) || !eta.is_finite() {
            return Err(Error::NonFinite("update_seq input".into()));
        }
        let s = self.assign_seq(x)?;
        let loss = self.loss_seq(s, x)?;
        let Banks::Sequence { w } = &mut self.banks else {
            unreachable!("assign_seq checked the mode")
        };
        let r = dot(w.row(s), x);
        gated_step(w.row_mut(s), x, r, eta);
        Ok((s, loss))
    }

    /// Sigmoid of the gated response of every unit.
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.seq_bank()?;
        check_len("X", x.len(), w.cols())?;
        Ok(w.iter_rows()
            .map(|r| {
                let f = dot(r, x);
                sigmoid(f * f)
            })
            .collect())
    }

    pub fn infer_pair(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let (wx, wy) = self.pair_banks()?;
        check_len("x", x.len(), wx.cols())?;
        check_len("y", y.len(), wy.cols())?;
        Ok(wx
            .iter_rows()
            .zip(wy.iter_rows())
            .map(|(a, b)| sigmoid(dot(a, x) * dot(b, y)))
            .collect())
    }

    fn normalize_rows(&mut self, rows: &[bool]) {
        let banks: Vec<&mut FilterBank> = match &mut self.banks {
            Banks::Pair { wx, wy } => vec![wx, wy],
            Banks::Sequence { w } => vec![w],
        };
        for bank in banks {
            for (q, _) in rows.iter().enumerate().filter(|(_, d)| **d) {
                contrast_normalize_in_place(bank.row_mut(q), NORMALIZE_EPS);
            }
        }
    }

    fn reseed_row(&mut self, q: usize, data: &TrainingData, sample: usize) {
        match (&mut self.banks, data) {
            (Banks::Pair { wx, wy }, TrainingData::Pair { x, y }) => {
                wx.row_mut(q).copy_from_slice(x.row(sample));
                wy.row_mut(q).copy_from_slice(y.row(sample));
                contrast_normalize_in_place(wx.row_mut(q), NORMALIZE_EPS);
                contrast_normalize_in_place(wy.row_mut(q), NORMALIZE_EPS);
            }
            (Banks::Sequence { w }, TrainingData::Sequence { x }) => {
                w.row_mut(q).copy_from_slice(x.row(sample));
                contrast_normalize_in_place(w.row_mut(q), NORMALIZE_EPS);
            }
            _ => unreachable!("training data built for the model's mode"),
        }
    }

    /// Online training on whitened patches. See [`train_online`] for the
    /// protocol. Returns the per-epoch mean loss of the assigned unit.
    pub fn train(&mut self, dataset: &PatchDataset, cfg: &TrainConfig, whitening: &WhiteningTransform) -> Result<Vec<f64>> {
        let data = TrainingData::prepare(self.mode(), dataset, whitening, self.input_len())?;
        self.train_whitened(&data, cfg)
    }

    pub fn train_whitened(&mut self, data: &TrainingData, cfg: &TrainConfig) -> Result<Vec<f64>> {
        data.check_mode(self.mode(), self.input_len())?;
        let units = self.units();
        train_online(
            self,
            data,
            cfg,
            units,
            |m, i, eta| match data {
                TrainingData::Pair { x, y } => {
                    let (xs, ys) = (x.row(i), y.row(i));
                    if cfg.normalize_inputs {
                        m.update_pair(&unit_scaled(xs), &unit_scaled(ys), eta)
                    } else {
                        m.update_pair(xs, ys, eta)
                    }
                }
                TrainingData::Sequence { x } => {
                    if cfg.normalize_inputs {
                        m.update_seq(&unit_scaled(x.row(i)), eta)
                    } else {
                        m.update_seq(x.row(i), eta)
                    }
                }
            },
            |m, dirty| m.normalize_rows(dirty),
            |m, q, sample| m.reseed_row(q, data, sample),
        )
    }
}

/// `v / ‖v‖`, or `v` unchanged when its norm is below [`NORMALIZE_EPS`].
pub fn unit_scaled(v: &[f64]) -> Vec<f64> {
    let n = crate::linalg::norm(v);
    if n < NORMALIZE_EPS {
        return v.to_vec();
    }
    v.iter().map(|x| x / n).collect()
}

/// `w += η (x·r − w·r²)`
fn gated_step(w: &mut [f64], x: &[f64], r: f64, eta: f64) {
    if eta == 0.0 || r == 0.0 {
        return;
    }
    let forget = 1.0 - eta * r * r;
    for (wi, xi) in w.iter_mut().zip(x) {
        *wi = *wi * forget + eta * r * xi;
    }
}

impl FeatureEncoder for SkMeansModel {
    fn input_dim(&self) -> usize {
        match self.mode() {
            Mode::Pair => 2 * self.input_len(),
            Mode::Sequence => self.input_len(),
        }
    }

    fn units(&self) -> usize {
        SkMeansModel::units(self)
    }

    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("encoder input", input.len(), FeatureEncoder::input_dim(self))?;
        check_len("encoder output", out.len(), self.units())?;
        let h = match self.mode() {
            Mode::Pair => {
                let (x, y) = input.split_at(self.input_len());
                self.infer_pair(x, y)?
            }
            Mode::Sequence => self.infer(input)?,
        };
        out.copy_from_slice(&h);
        Ok(())
    }
}

/// Whitened training samples.
#[derive(Debug, Clone)]
pub enum TrainingData {
    /// First and second frames, whitened with a frame-level transform.
    Pair { x: RowMatrix, y: RowMatrix },
    /// Whole clips, whitened with a clip-level transform.
    Sequence { x: RowMatrix },
}

impl TrainingData {
    /// Whiten a dataset for a model of the given mode and input length.
    ///
    /// Sequence mode whitens each flattened patch. Pair mode whitens the
    /// first two frames separately, so the transform must be frame sized.
    pub fn prepare(mode: Mode, dataset: &PatchDataset, whitening: &WhiteningTransform, input_len: usize) -> Result<Self> {
        let dims = dataset
            .dims()
            .ok_or_else(|| Error::invalid("training dataset is empty"))?;
        if whitening.retained_dims() != input_len {
            return Err(Error::shape(format!(
                "whitening yields {} dims but the model expects {input_len}",
                whitening.retained_dims()
            )));
        }
        match mode {
            Mode::Sequence => {
                check_len("whitening input vs patch size", whitening.input_dim(), dims.len())?;
                let x = whitening.apply_blocks(dataset.patches().iter().map(|p| p.values()))?;
                Ok(TrainingData::Sequence { x })
            }
            Mode::Pair => {
                if dims.t < 2 {
                    return Err(Error::shape(format!("pair mode needs >= 2 frames, patches are {dims}")));
                }
                check_len("whitening input vs frame size", whitening.input_dim(), dims.frame_len())?;
                let x = whitening.apply_blocks(dataset.patches().iter().map(|p| p.frame(0)))?;
                let y = whitening.apply_blocks(dataset.patches().iter().map(|p| p.frame(1)))?;
                Ok(TrainingData::Pair { x, y })
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TrainingData::Pair { x, .. } | TrainingData::Sequence { x } => x.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// One row per sample: the clip, or `[x, y]` in pair mode.
    pub fn inputs(&self) -> RowMatrix {
        match self {
            TrainingData::Sequence { x } => x.clone(),
            TrainingData::Pair { x, y } => {
                let n = x.cols();
                RowMatrix::from_fn(x.rows(), 2 * n, |i, k| if k < n { x.get(i, k) } else { y.get(i, k - n) })
            }
        }
    }

    /// Copy with every sample (every frame in pair mode) scaled to unit norm.
    pub fn unit_scaled(&self) -> Self {
        let scale = |m: &RowMatrix| {
            let mut out = m.clone();
            for i in 0..out.rows() {
                let u = unit_scaled(m.row(i));
                out.row_mut(i).copy_from_slice(&u);
            }
            out
        };
        match self {
            TrainingData::Pair { x, y } => TrainingData::Pair { x: scale(x), y: scale(y) },
            TrainingData::Sequence { x } => TrainingData::Sequence { x: scale(x) },
        }
    }

    pub fn sequences(&self) -> Option<&RowMatrix> {
        match self {
            TrainingData::Sequence { x } => Some(x),
            TrainingData::Pair { .. } => None,
        }
    }

    fn check_mode(&self, mode: Mode, input_len: usize) -> Result<()> {
        let (m, cols) = match self {
            TrainingData::Pair { x, .. } => (Mode::Pair, x.cols()),
            TrainingData::Sequence { x } => (Mode::Sequence, x.cols()),
        };
        if m != mode {
            return Err(Error::invalid(format!(
                "{} training data for a {} model",
                m.as_str(),
                mode.as_str()
            )));
        }
        check_len("training sample", cols, input_len)?;
        if self.is_empty() {
            return Err(Error::invalid("no training samples"));
        }
        Ok(())
    }
}

/// Shared online protocol for the K-means family.
///
/// One pass per epoch in seeded shuffled order. Rows touched by an update
/// are re-normalised every `normalize_every` updates and at the end of each
/// epoch. Units that never win during an epoch are re-seeded from a random
/// training sample. `eta` is multiplied by `eta_decay` after every epoch.
/// With `eta == 0` the model is left untouched.
pub(crate) fn train_online<M>(
    model: &mut M,
    data: &TrainingData,
    cfg: &TrainConfig,
    units: usize,
    mut update: impl FnMut(&mut M, usize, f64) -> Result<(usize, f64)>,
    mut normalize: impl FnMut(&mut M, &[bool]),
    mut reseed: impl FnMut(&mut M, usize, usize),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = data.len();
    let mut eta = cfg.eta;
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut dirty = vec![false; units];
    let mut steps = 0usize;
    for epoch in 0..cfg.epochs {
        let mut order_rng = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let order = rng::shuffled_indices(n, &mut order_rng);
        let mut wins = vec![0usize; units];
        let mut total = 0.0;
        for &i in &order {
            let (s, loss) = update(model, i, eta)?;
            wins[s] += 1;
            total += loss;
            if eta != 0.0 {
                dirty[s] = true;
            }
            steps += 1;
            if cfg.normalize_every > 0 && steps % cfg.normalize_every == 0 {
                normalize(model, &dirty);
                dirty.iter_mut().for_each(|d| *d = false);
            }
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged {
                epoch,
                trace: trace.into_iter().map(|l| vec![l]).collect(),
            });
        }
        trace.push(mean);
        if eta != 0.0 {
            if cfg.normalize_every > 0 {
                normalize(model, &dirty);
                dirty.iter_mut().for_each(|d| *d = false);
            }
            let mut reseed_rng = order_rng;
            for q in (0..units).filter(|&q| wins[q] == 0) {
                let sample = rand::Rng::random_range(&mut reseed_rng, 0..n);
                reseed(model, q, sample);
            }
        }
        eta *= cfg.eta_decay;
    }
    Ok(trace)
}

/// One step of standard online K-means: the nearest centroid moves toward
/// `x` by `η (x − W_s)`. Returns the winner.
pub fn standard_kmeans_update(centroids: &mut FilterBank, x: &[f64], eta: f64) -> Result<usize> {
    check_len("x", x.len(), centroids.cols())?;
    let s = nearest_row(centroids, x);
    let row = centroids.row_mut(s);
    for (w, xi) in row.iter_mut().zip(x) {
        *w += eta * (xi - *w);
    }
    Ok(s)
}

/// `argmin_q ‖x − W_q‖²`, lowest index on ties.
pub fn nearest_row(bank: &FilterBank, x: &[f64]) -> usize {
    argmax(bank.iter_rows().map(|r| -sq_dist(r, x)))
}

/// Standard online K-means over whitened clips; the non-synchrony
/// baseline. Features use the triangle activation
/// `max(0, mean_k z_k − z_q)` with `z_q = ‖X − W_q‖`.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineKMeans {
    centroids: FilterBank,
    frame_dims: BlockDims,
}

impl OnlineKMeans {
    pub fn init(q: usize, n: usize, frame_dims: BlockDims, seed: u64) -> Result<Self> {
        if q == 0 || n == 0 {
            return Err(Error::invalid("unit count and input length must be >= 1"));
        }
        let mut r = rng::seeded(seed);
        Ok(Self {
            centroids: random_bank(q, n, &mut r),
            frame_dims,
        })
    }

    pub fn from_centroids(centroids: FilterBank, frame_dims: BlockDims) -> Result<Self> {
        if centroids.rows() == 0 || !centroids.is_finite() {
            return Err(Error::invalid("centroids must be non-empty and finite"));
        }
        Ok(Self {
            centroids,
            frame_dims,
        })
    }

    pub fn centroids(&self) -> &FilterBank {
        &self.centroids
    }

    pub fn frame_dims(&self) -> BlockDims {
        self.frame_dims
    }

    pub fn train_whitened(&mut self, data: &TrainingData, cfg: &TrainConfig) -> Result<Vec<f64>> {
        data.check_mode(Mode::Sequence, self.centroids.cols())?;
        let x = data.sequences().expect("checked sequence mode");
        let units = self.centroids.rows();
        train_online(
            self,
            data,
            cfg,
            units,
            |m, i, eta| {
                let scaled;
                let xi = if cfg.normalize_inputs {
                    scaled = unit_scaled(x.row(i));
                    &scaled[..]
                } else {
                    x.row(i)
                };
                if !all_finite(xi) {
                    return Err(Error::NonFinite(format!("training sample {i}")));
                }
                let s = nearest_row(&m.centroids, xi);
                let loss = sq_dist(m.centroids.row(s), xi);
                standard_kmeans_update(&mut m.centroids, xi, eta)?;
                Ok((s, loss))
            },
            |m, dirty| {
                for (q, _) in dirty.iter().enumerate().filter(|(_, d)| **d) {
                    contrast_normalize_in_place(m.centroids.row_mut(q), NORMALIZE_EPS);
                }
            },
            |m, q, sample| {
                m.centroids.row_mut(q).copy_from_slice(x.row(sample));
                contrast_normalize_in_place(m.centroids.row_mut(q), NORMALIZE_EPS);
            },
        )
    }

    pub fn train(&mut self, dataset: &PatchDataset, cfg: &TrainConfig, whitening: &WhiteningTransform) -> Result<Vec<f64>> {
        let data = TrainingData::prepare(Mode::Sequence, dataset, whitening, self.centroids.cols())?;
        self.train_whitened(&data, cfg)
    }
}

impl FeatureEncoder for OnlineKMeans {
    fn input_dim(&self) -> usize {
        self.centroids.cols()
    }

    fn units(&self) -> usize {
        self.centroids.rows()
    }

    fn encode_into(&self, input: &[f64], out: &mut [f64]) -> Result<()> {
        check_len("encoder input", input.len(), self.centroids.cols())?;
        check_len("encoder output", out.len(), self.centroids.rows())?;
        for (o, r) in out.iter_mut().zip(self.centroids.iter_rows()) {
            *o = sq_dist(r, input).sqrt();
        }
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        out.iter_mut().for_each(|z| *z = (mean - *z).max(0.0));
        Ok(())
    }
}

/// Apply `gated_step` semantics without a model, for oracle comparisons.
#[doc(hidden)]
pub fn gated_delta(w: &[f64], x: &[f64], r: f64, eta: f64) -> Vec<f64> {
    let mut d = vec![0.0; w.len()];
    axpy(eta * r, x, &mut d);
    axpy(-eta * r * r, w, &mut d);
    d
}
