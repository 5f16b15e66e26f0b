//! Synthetic corpora: translated image patches, direction clips and
//! sinusoid pairs.
//!
//! Translations are genuine crops from an enlarged source window, never
//! wrapped or padded, so consecutive frames are exact index shifts of one
//! another on their shared support.

use rand::Rng as _;

use super::{BlockDims, PatchDataset, VideoBlock};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;
use crate::rng::{self, Rng};

/// Natural-image stand-ins: sums of bilinearly interpolated value-noise
/// octaves with equal amplitude per octave (roughly 1/f amplitude), scaled
/// to zero mean and unit variance.
pub fn synthetic_images(count: usize, rows: usize, cols: usize, seed: u64) -> Vec<RowMatrix> {
    let mut rng = rng::seeded(seed);
    (0..count).map(|_| value_noise_image(rows, cols, &mut rng)).collect()
}

fn value_noise_image(rows: usize, cols: usize, rng: &mut Rng) -> RowMatrix {
    let mut img = RowMatrix::zeros(rows, cols);
    let mut spacing = 2usize;
    while spacing <= 32 {
        let gr = rows / spacing + 2;
        let gc = cols / spacing + 2;
        let grid: Vec<f64> = (0..gr * gc).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let s = spacing as f64;
        for r in 0..rows {
            let fr = r as f64 / s;
            let (ir, ar) = (fr.floor() as usize, fr - fr.floor());
            for c in 0..cols {
                let fc = c as f64 / s;
                let (ic, ac) = (fc.floor() as usize, fc - fc.floor());
                let g = |i: usize, j: usize| grid[i * gc + j];
                let top = g(ir, ic) * (1.0 - ac) + g(ir, ic + 1) * ac;
                let bot = g(ir + 1, ic) * (1.0 - ac) + g(ir + 1, ic + 1) * ac;
                let v = img.get(r, c) + top * (1.0 - ar) + bot * ar;
                img.set(r, c, v);
            }
        }
        spacing *= 2;
    }
    let n = (rows * cols) as f64;
    let mean = img.as_slice().iter().sum::<f64>() / n;
    let var = img.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / var.sqrt().max(1e-12);
    img.as_mut_slice().iter_mut().for_each(|v| *v = (*v - mean) * inv);
    img
}

/// Encodes a per-frame window shift `(dx, dy)` in `[-max_shift, max_shift]^2`
/// as `(dy + s) * (2s + 1) + (dx + s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftLabel {
    pub dx: i64,
    pub dy: i64,
}

impl ShiftLabel {
    pub fn encode(&self, max_shift: usize) -> u32 {
        let s = max_shift as i64;
        ((self.dy + s) * (2 * s + 1) + (self.dx + s)) as u32
    }

    pub fn decode(label: u32, max_shift: usize) -> Self {
        let s = max_shift as i64;
        let side = 2 * s + 1;
        let l = label as i64;
        Self {
            dx: l % side - s,
            dy: l / side - s,
        }
    }
}

fn check_sources(sources: &[RowMatrix], need_rows: usize, need_cols: usize) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::invalid("source image list is empty"));
    }
    for (index, img) in sources.iter().enumerate() {
        if img.rows() < need_rows || img.cols() < need_cols {
            return Err(Error::SourceTooSmall {
                index,
                rows: img.rows(),
                cols: img.cols(),
                need_rows,
                need_cols,
            });
        }
    }
    Ok(())
}

/// Draw a frame-0 origin so that every frame origin `origin + t * step`
/// stays inside `[0, extent - size]`.
fn draw_origin(extent: usize, size: usize, frames: usize, step: i64, rng: &mut Rng) -> usize {
    let travel = step * (frames as i64 - 1);
    let lo = (-travel).max(0);
    let hi = (extent - size) as i64 - travel.max(0);
    debug_assert!(hi >= lo);
    rng.random_range(lo..=hi) as usize
}

fn translated_block(
    img: &RowMatrix,
    dims: BlockDims,
    (r0, c0): (usize, usize),
    (dx, dy): (i64, i64),
) -> Result<VideoBlock> {
    VideoBlock::from_fn(dims, |t, r, c| {
        let rr = (r0 as i64 + t as i64 * dy) as usize + r;
        let cc = (c0 as i64 + t as i64 * dx) as usize + c;
        img.get(rr, cc) as f32
    })
}

/// `count` patches where frame `t` is the frame-0 window moved by
/// `t * (dx, dy)`, with the shift drawn uniformly per patch. Labels are
/// [`ShiftLabel`] codes.
pub fn generate_translating_patches(
    sources: &[RowMatrix],
    count: usize,
    dims: BlockDims,
    max_shift: usize,
    seed: u64,
) -> Result<PatchDataset> {
    if count == 0 {
        return Err(Error::invalid("patch count must be >= 1"));
    }
    if dims.is_empty() {
        return Err(Error::invalid(format!("patch dims {dims} must all be >= 1")));
    }
    let margin = 2 * dims.t * max_shift;
    check_sources(sources, dims.h + margin, dims.w + margin)?;
    let mut rng = rng::seeded(seed);
    let s = max_shift as i64;
    let mut patches = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let img = &sources[rng.random_range(0..sources.len())];
        let dx = rng.random_range(-s..=s);
        let dy = rng.random_range(-s..=s);
        let r0 = draw_origin(img.rows(), dims.h, dims.t, dy, &mut rng);
        let c0 = draw_origin(img.cols(), dims.w, dims.t, dx, &mut rng);
        patches.push(translated_block(img, dims, (r0, c0), (dx, dy))?);
        labels.push(ShiftLabel { dx, dy }.encode(max_shift));
    }
    PatchDataset::new(patches, Some(labels), seed)
}

/// Direction of apparent content motion in a clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    /// Window step per frame that makes the content move this way.
    pub fn window_step(self, speed: i64) -> (i64, i64) {
        match self {
            Direction::Up => (0, speed),
            Direction::Down => (0, -speed),
            Direction::Left => (speed, 0),
            Direction::Right => (-speed, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// Balanced four-class clips (`label = i % 4`, see [`Direction`]) with the
/// content moving `speed` pixels per frame.
pub fn generate_direction_clips(
    sources: &[RowMatrix],
    count: usize,
    dims: BlockDims,
    speed: usize,
    seed: u64,
) -> Result<PatchDataset> {
    if count == 0 {
        return Err(Error::invalid("clip count must be >= 1"));
    }
    let margin = 2 * dims.t * speed;
    check_sources(sources, dims.h + margin, dims.w + margin)?;
    let mut rng = rng::seeded(seed);
    let mut clips = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let dir = Direction::ALL[i % 4];
        let (dx, dy) = dir.window_step(speed as i64);
        let img = &sources[rng.random_range(0..sources.len())];
        let r0 = draw_origin(img.rows(), dims.h, dims.t, dy, &mut rng);
        let c0 = draw_origin(img.cols(), dims.w, dims.t, dx, &mut rng);
        clips.push(translated_block(img, dims, (r0, c0), (dx, dy))?);
        labels.push(dir as u32);
    }
    PatchDataset::new(clips, Some(labels), seed)
}

/// `x1[i] = sin(2π·freq·i + phase)` and `x2` is `x1` circularly shifted
/// right by `shift` samples, i.e. `x2[i] = x1[(i - shift) mod n]`.
pub fn generate_sinusoid_pair(n: usize, freq: f64, phase: f64, shift: i64) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 4 {
        return Err(Error::invalid(format!("sinusoid length {n} must be >= 4")));
    }
    if !(freq > 0.0 && freq < 0.5) {
        return Err(Error::invalid(format!("frequency {freq} outside (0, 0.5)")));
    }
    let tau = 2.0 * std::f64::consts::PI;
    let x1: Vec<f64> = (0..n).map(|i| (tau * freq * i as f64 + phase).sin()).collect();
    let ni = n as i64;
    let x2 = (0..n)
        .map(|i| x1[(i as i64 - shift).rem_euclid(ni) as usize])
        .collect();
    Ok((x1, x2))
}
