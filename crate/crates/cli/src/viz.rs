//! Filter mosaics as binary PGM images.
//!
//! A mosaic is a grid of `tile_h x tile_w` tiles separated by `gap` black
//! pixels, with no outer border. For `rows x cols` tiles the image is
//! `cols*tile_w + (cols-1)*gap` wide and `rows*tile_h + (rows-1)*gap` tall.
//! Rows may hold fewer tiles than `cols`; missing tiles stay black.

use motionsync::bundle::ModelBundle;
use motionsync::data::BlockDims;
use motionsync::linalg::RowMatrix;
use motionsync::pipeline::{pooling_report, PoolingGroup};
use motionsync::{Error, Mode, Result};

/// Filters per pooling group in the grouping mosaic.
pub const POOLING_TOP: usize = 6;

/// Values of one tile, row-major.
pub type Tile = Vec<f64>;

/// A set of tiles rescaled together to the full grey range.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleGroup {
    pub tiles: Vec<Tile>,
}

/// Grey image buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GreyImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// Min-max scale to 0..=255 over every value of the group; a constant group
/// maps to 128.
pub fn scale_group(tiles: &[Tile]) -> Vec<Vec<u8>> {
    let (lo, hi) = tiles
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    tiles
        .iter()
        .map(|t| {
            t.iter()
                .map(|&v| {
                    if !(span > 0.0) {
                        128
                    } else {
                        ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
                    }
                })
                .collect()
        })
        .collect()
}

/// Lay out one grid row per entry of `rows`. Each row is a list of scale
/// groups whose tiles are placed left to right.
pub fn mosaic(rows: &[Vec<ScaleGroup>], tile_h: usize, tile_w: usize, gap: usize) -> Result<GreyImage> {
    if rows.is_empty() || tile_h == 0 || tile_w == 0 {
        return Err(Error::InvalidArgument("mosaic needs at least one row and non-empty tiles".into()));
    }
    let cols = rows
        .iter()
        .map(|r| r.iter().map(|g| g.tiles.len()).sum::<usize>())
        .max()
        .unwrap_or(0)
        .max(1);
    let width = cols * tile_w + (cols - 1) * gap;
    let height = rows.len() * tile_h + (rows.len() - 1) * gap;
    let mut pixels = vec![0u8; width * height];
    for (ri, row) in rows.iter().enumerate() {
        let top = ri * (tile_h + gap);
        let mut ci = 0;
        for group in row {
            for tile in scale_group(&group.tiles) {
                if tile.len() != tile_h * tile_w {
                    return Err(Error::Shape(format!(
                        "tile has {} values, expected {tile_h}x{tile_w}",
                        tile.len()
                    )));
                }
                let left = ci * (tile_w + gap);
                for r in 0..tile_h {
                    let start = (top + r) * width + left;
                    pixels[start..start + tile_w].copy_from_slice(&tile[r * tile_w..(r + 1) * tile_w]);
                }
                ci += 1;
            }
        }
    }
    Ok(GreyImage { width, height, pixels })
}

/// Pixel-space filters of a bundle: one entry per hidden unit, each a list
/// of frames of `frame_h x frame_w` values.
///
/// Whitened weights are mapped back through the whitening inverse. Pair
/// models give two frames per unit, one from each bank.
pub fn pixel_filters(bundle: &ModelBundle) -> Result<(BlockDims, Vec<Vec<Tile>>)> {
    let model = &bundle.model;
    let fd = model.frame_dims();
    let banks = model.filter_banks();
    let to_pixels = |v: &[f64], want: usize| -> Result<Vec<f64>> {
        match &bundle.whitening {
            Some(w) if w.retained_dims() == v.len() && w.input_dim() == want => {
                let mut out = vec![0.0; want];
                w.inverse().mul_vec(v, &mut out);
                Ok(out)
            }
            _ if v.len() == want => Ok(v.to_vec()),
            _ => Err(Error::Shape(format!(
                "cannot map {}-dim filters to {want} pixels without a matching whitening",
                v.len()
            ))),
        }
    };
    match model.mode() {
        Mode::Sequence => {
            let bank = banks[0];
            let filters = bank
                .iter_rows()
                .map(|row| {
                    let px = to_pixels(row, fd.len())?;
                    Ok(px.chunks_exact(fd.frame_len()).map(<[f64]>::to_vec).collect())
                })
                .collect::<Result<_>>()?;
            Ok((fd, filters))
        }
        Mode::Pair => {
            let (bx, by) = (banks[0], *banks.last().expect("at least one bank"));
            let filters = (0..bx.rows())
                .map(|q| Ok(vec![to_pixels(bx.row(q), fd.frame_len())?, to_pixels(by.row(q), fd.frame_len())?]))
                .collect::<Result<_>>()?;
            Ok((BlockDims::new(2, fd.h, fd.w), filters))
        }
    }
}

/// One row per filter with all of its frames, scaled per filter.
pub fn filter_mosaic(bundle: &ModelBundle, gap: usize) -> Result<GreyImage> {
    let (fd, filters) = pixel_filters(bundle)?;
    let rows: Vec<Vec<ScaleGroup>> = filters.into_iter().map(|tiles| vec![ScaleGroup { tiles }]).collect();
    mosaic(&rows, fd.h, fd.w, gap)
}

/// One row per pooling group, most populated first, showing the middle
/// frame of each of its top filters, each scaled on its own.
pub fn pooling_mosaic(bundle: &ModelBundle, hiddens: &RowMatrix, gap: usize) -> Result<(GreyImage, Vec<PoolingGroup>)> {
    let book = bundle
        .pooling
        .as_ref()
        .ok_or_else(|| Error::NotFitted("model bundle has no pooling layer; fit one with `extract --fit-codebook` and pipeline.pooling = true".into()))?;
    let (fd, filters) = pixel_filters(bundle)?;
    let groups = pooling_report(book, hiddens, POOLING_TOP)?;
    let rows: Vec<Vec<ScaleGroup>> = groups
        .iter()
        .map(|g| {
            g.top_filters
                .iter()
                .map(|&q| ScaleGroup {
                    tiles: vec![filters[q][filters[q].len() / 2].clone()],
                })
                .collect()
        })
        .collect();
    Ok((mosaic(&rows, fd.h, fd.w, gap)?, groups))
}
