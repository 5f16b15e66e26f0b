use super::{BlockDims, VideoBlock};
use crate::error::{Error, Result};

/// Number of grid positions along one axis: `floor((extent - block) / stride) + 1`.
pub fn grid_count(extent: usize, block: usize, stride: usize) -> usize {
    if block > extent || stride == 0 {
        0
    } else {
        (extent - block) / stride + 1
    }
}

pub fn crop_block(video: &VideoBlock, offset: (usize, usize, usize), dims: BlockDims) -> Result<VideoBlock> {
    let vd = video.dims();
    let (t0, r0, c0) = offset;
    if t0 + dims.t > vd.t || r0 + dims.h > vd.h || c0 + dims.w > vd.w {
        return Err(Error::shape(format!(
            "block {dims} at {offset:?} leaves video {vd}"
        )));
    }
    let mut values = Vec::with_capacity(dims.len());
    let src = video.values();
    for t in 0..dims.t {
        for r in 0..dims.h {
            let start = ((t0 + t) * vd.h + r0 + r) * vd.w + c0;
            values.extend_from_slice(&src[start..start + dims.w]);
        }
    }
    VideoBlock::new(dims, values)
}

/// Every block of `block_dims` that lies fully inside `video` on the stride
/// grid, ordered by time offset, then row, then column.
pub fn crop_blocks(video: &VideoBlock, block_dims: BlockDims, strides: BlockDims) -> Result<Vec<VideoBlock>> {
    let vd = video.dims();
    if !block_dims.fits_in(&vd) {
        return Err(Error::shape(format!("block {block_dims} larger than video {vd}")));
    }
    if strides.t == 0 || strides.h == 0 || strides.w == 0 {
        return Err(Error::invalid(format!("strides {strides} must be >= 1")));
    }
    let nt = grid_count(vd.t, block_dims.t, strides.t);
    let nh = grid_count(vd.h, block_dims.h, strides.h);
    let nw = grid_count(vd.w, block_dims.w, strides.w);
    let mut out = Vec::with_capacity(nt * nh * nw);
    for i in 0..nt {
        for j in 0..nh {
            for k in 0..nw {
                out.push(crop_block(
                    video,
                    (i * strides.t, j * strides.h, k * strides.w),
                    block_dims,
                )?);
            }
        }
    }
    Ok(out)
}
