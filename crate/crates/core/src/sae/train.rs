//! Mini-batch momentum training and gradient verification shared by the
//! autoencoder models.

use std::borrow::Cow;

use rand::seq::index::sample;

use crate::error::{check_len, Error, Result};
use crate::linalg::RowMatrix;
use crate::rng;
use crate::skmeans::unit_scaled;

use super::SaeModel;

/// Batch-averaged loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub recon: f64,
    pub contraction: f64,
    /// `recon + λ·contraction`
    pub total: f64,
}

impl LossParts {
    pub fn new(recon: f64, contraction: f64, lambda: f64) -> Self {
        Self {
            recon,
            contraction,
            total: recon + lambda * contraction,
        }
    }
}

/// A model whose parameters are a list of flat blocks and whose batch loss
/// has analytic gradients.
pub trait GradientModel {
    fn param_blocks(&self) -> Vec<&[f64]>;
    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]>;
    /// Length of one input row.
    fn sample_len(&self) -> usize;
    fn loss(&self, batch: &[&[f64]]) -> Result<LossParts>;
    /// Loss plus one gradient vector per parameter block.
    fn loss_and_gradients(&self, batch: &[&[f64]]) -> Result<(LossParts, Vec<Vec<f64>>)>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaeTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Scale every training row to unit norm first.
    pub normalize_inputs: bool,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            momentum: 0.9,
            batch_size: 128,
            epochs: 20,
            seed: 0,
            normalize_inputs: true,
        }
    }
}

impl SaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be >= 0", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!("momentum {} must be in [0, 1)", self.momentum)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be >= 1"));
        }
        Ok(())
    }
}

fn diverged(epoch: usize, trace: &[LossParts]) -> Error {
    Error::Diverged {
        epoch,
        trace: trace.iter().map(|l| vec![l.recon, l.contraction]).collect(),
    }
}

/// Momentum SGD over seeded shuffled mini-batches.
///
/// Returns the per-epoch mean of the batch losses seen during the epoch.
/// A non-finite loss or parameter aborts with [`Error::Diverged`] carrying
/// the finite part of the trace.
pub fn train_model<M: GradientModel>(model: &mut M, inputs: &RowMatrix, cfg: &SaeTrainConfig) -> Result<Vec<LossParts>> {
    cfg.validate()?;
    check_len("training sample", inputs.cols(), model.sample_len())?;
    let n = inputs.rows();
    if n == 0 {
        return Err(Error::invalid("no training samples"));
    }
    if !inputs.is_finite() {
        return Err(Error::NonFinite("training inputs".into()));
    }
    let inputs: Cow<'_, RowMatrix> = if cfg.normalize_inputs {
        let mut s = inputs.clone();
        for i in 0..n {
            let u = unit_scaled(inputs.row(i));
            s.row_mut(i).copy_from_slice(&u);
        }
        Cow::Owned(s)
    } else {
        Cow::Borrowed(inputs)
    };
    let mut velocity: Vec<Vec<f64>> = model.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut r = rng::seeded(rng::derive(cfg.seed, epoch as u64));
        let order = rng::shuffled_indices(n, &mut r);
        let (mut recon, mut contraction, mut total) = (0.0, 0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| inputs.row(i)).collect();
            // inputs are finite, so any non-finite value here comes from the weights
            let (loss, grads) = match model.loss_and_gradients(&batch) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(diverged(epoch, &trace)),
                Err(e) => return Err(e),
            };
            if !loss.total.is_finite() {
                return Err(diverged(epoch, &trace));
            }
            let w = chunk.len() as f64;
            recon += loss.recon * w;
            contraction += loss.contraction * w;
            total += loss.total * w;
            if cfg.learning_rate == 0.0 {
                continue;
            }
            for ((p, v), g) in model.param_blocks_mut().into_iter().zip(&mut velocity).zip(&grads) {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = cfg.momentum * *vi - cfg.learning_rate * gi;
                    *pi += *vi;
                }
            }
            if model.param_blocks().iter().any(|b| !crate::linalg::all_finite(b)) {
                return Err(diverged(epoch, &trace));
            }
        }
        let nf = n as f64;
        trace.push(LossParts {
            recon: recon / nf,
            contraction: contraction / nf,
            total: total / nf,
        });
    }
    Ok(trace)
}

/// Denominator floor of the relative error, as a fraction of the largest
/// checked analytic gradient magnitude.
pub const FD_FLOOR_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct FdOptions {
    /// Central-difference step, scaled by `max(1, |w|)` per coordinate.
    pub step: f64,
    /// Check every coordinate up to this many parameters ...
    pub exhaustive_limit: usize,
    /// ... otherwise this many seeded random coordinates.
    pub subsample: usize,
    pub seed: u64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            exhaustive_limit: 10_000,
            subsample: 500,
            seed: 0,
        }
    }
}

impl FdOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    /// `max |a − n| / max(|a|, |n|, floor)` over the checked coordinates.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub floor: f64,
    pub step: f64,
    pub coords_checked: usize,
    /// `(block, index)` of the worst coordinate.
    pub worst: (usize, usize),
}

/// Compare analytic gradients of the batch total loss with central
/// differences.
pub fn finite_diff_check<M: GradientModel + Clone>(model: &M, batch: &[&[f64]], opts: &FdOptions) -> Result<FdReport> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::invalid(format!("step {} must be > 0", opts.step)));
    }
    let (_, grads) = model.loss_and_gradients(batch)?;
    let sizes: Vec<usize> = grads.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let flat: Vec<usize> = if total <= opts.exhaustive_limit {
        (0..total).collect()
    } else {
        let mut r = rng::seeded(opts.seed);
        let mut v = sample(&mut r, total, opts.subsample.min(total)).into_vec();
        v.sort_unstable();
        v
    };
    let coords: Vec<(usize, usize)> = flat
        .iter()
        .map(|&k| {
            let mut rem = k;
            let mut b = 0;
            while rem >= sizes[b] {
                rem -= sizes[b];
                b += 1;
            }
            (b, rem)
        })
        .collect();
    let floor = coords
        .iter()
        .map(|&(b, i)| grads[b][i].abs())
        .fold(0.0, f64::max)
        * FD_FLOOR_FRACTION;
    let floor = floor.max(f64::MIN_POSITIVE);
    let mut probe = model.clone();
    let mut report = FdReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        floor,
        step: opts.step,
        coords_checked: coords.len(),
        worst: (0, 0),
    };
    for &(b, i) in &coords {
        let orig = probe.param_blocks()[b][i];
        let h = opts.step * orig.abs().max(1.0);
        probe.param_blocks_mut()[b][i] = orig + h;
        let lp = probe.loss(batch)?.total;
        probe.param_blocks_mut()[b][i] = orig - h;
        let lm = probe.loss(batch)?.total;
        probe.param_blocks_mut()[b][i] = orig;
        let numeric = (lp - lm) / (2.0 * h);
        let analytic = grads[b][i];
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        if rel > report.max_rel_error || !rel.is_finite() {
            report.max_rel_error = rel;
            report.worst = (b, i);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// `(λ, held-out reconstruction loss)` per candidate.
    pub scores: Vec<(f64, f64)>,
    pub best_lambda: f64,
}

/// Train a copy of `base` per candidate λ and score by held-out
/// reconstruction loss. The lowest score wins; earlier candidates win ties.
pub fn lambda_sweep(
    base: &SaeModel,
    train: &RowMatrix,
    held_out: &RowMatrix,
    cfg: &SaeTrainConfig,
    lambdas: &[f64],
) -> Result<SweepResult> {
    if lambdas.is_empty() {
        return Err(Error::invalid("no lambda candidates"));
    }
    let held: Vec<&[f64]> = held_out.iter_rows().collect();
    let mut scores = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut m = base.clone().with_lambda(lambda)?;
        train_model(&mut m, train, cfg)?;
        scores.push((lambda, m.total_loss(&held)?.recon));
    }
    let best_lambda = scores
        .iter()
        .fold((f64::NAN, f64::INFINITY), |best, &(l, s)| if s < best.1 { (l, s) } else { best })
        .0;
    Ok(SweepResult { scores, best_lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BlockDims;

    #[test]
    fn zero_rate_leaves_model_unchanged() {
        let mut m = SaeModel::init_sequence(3, 4, 0.5, BlockDims::new(4, 1, 1), 1).unwrap();
        let before = m.clone();
        let x = RowMatrix::from_fn(10, 4, |i, j| ((i * 4 + j) as f64).cos());
        let cfg = SaeTrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 4,
            ..Default::default()
        };
        let trace = train_model(&mut m, &x, &cfg).unwrap();
        assert_eq!(m, before);
        assert_eq!(trace.len(), 3);
        // same weights each epoch, only the batch order differs
        assert!((trace[0].total - trace[2].total).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SaeTrainConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn huge_rate_reports_divergence() {
        let mut m = SaeModel::init_sequence(4, 4, 0.5, BlockDims::new(4, 1, 1), 1).unwrap();
        let x = RowMatrix::from_fn(32, 4, |i, j| 3.0 * ((i * 7 + j) as f64).sin());
        let cfg = SaeTrainConfig {
            learning_rate: 1e6,
            epochs: 5,
            batch_size: 8,
            ..Default::default()
        };
        match train_model(&mut m, &x, &cfg) {
            Err(Error::Diverged { trace, .. }) => assert!(trace.iter().flatten().all(|v| v.is_finite())),
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
