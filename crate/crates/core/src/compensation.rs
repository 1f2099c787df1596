//! Block prediction through the motion warp and frame assembly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::MotionField;
use crate::frame::{sample_bilinear, Frame};
use crate::geometry::{zeta_in, FrameGeometry, MotionPlane, PixelCoord};
use crate::motion::{warp_plane_point, BlockMotion};

/// A square block of the template frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockSpec {
    pub u0: usize,
    pub v0: usize,
    pub size: usize,
}

impl BlockSpec {
    pub const fn new(u0: usize, v0: usize, size: usize) -> Self {
        Self { u0, v0, size }
    }

    /// Center of the block in continuous pixel coordinates.
    pub fn center(&self) -> PixelCoord {
        let half = (self.size as f64 - 1.0) / 2.0;
        PixelCoord::new(self.u0 as f64 + half, self.v0 as f64 + half)
    }

    /// Pixel positions in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = PixelCoord> + '_ {
        (0..self.size).flat_map(move |j| {
            (0..self.size)
                .map(move |i| PixelCoord::new((self.u0 + i) as f64, (self.v0 + j) as f64))
        })
    }

    /// Row-major tiling of the frame with blocks of `size`.
    pub fn grid(geom: FrameGeometry, size: usize) -> Result<Vec<BlockSpec>> {
        check_block_size(geom, size)?;
        let cols = geom.width() / size;
        let rows = geom.height() / size;
        Ok((0..rows)
            .flat_map(|r| (0..cols).map(move |c| BlockSpec::new(c * size, r * size, size)))
            .collect())
    }
}

pub fn check_block_size(geom: FrameGeometry, size: usize) -> Result<()> {
    if size == 0 || geom.width() % size != 0 || geom.height() % size != 0 {
        return Err(Error::InvalidConfig(format!(
            "block size {size} does not tile a {}x{} frame",
            geom.width(),
            geom.height()
        )));
    }
    Ok(())
}

/// Real-valued prediction of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictedBlock {
    pub block: BlockSpec,
    pub samples: Vec<f64>,
}

/// Predicts a block from the reference by warping each pixel position and
/// interpolating.
pub fn predict_block(reference: &Frame, block: BlockSpec, motion: &BlockMotion) -> Result<PredictedBlock> {
    let geom = reference.geometry();
    let samples = match motion {
        BlockMotion::Erp(t) => block
            .pixels()
            .map(|px| sample_bilinear(reference, PixelCoord::new(px.u + t.x, px.v + t.y)))
            .collect(),
        BlockMotion::Plane(pm) => {
            let plane = MotionPlane::new(pm.plane);
            let m = pm.matrix();
            block
                .pixels()
                .map(|px| {
                    let pt = zeta_in(px, &plane, pm.hemisphere, geom)?;
                    Ok(sample_bilinear(reference, warp_plane_point(&pt, &plane, &m, geom)))
                })
                .collect::<Result<Vec<f64>>>()?
        }
    };
    Ok(PredictedBlock { block, samples })
}

/// Tiles predicted blocks into a frame, rounding and clipping each sample.
/// Every pixel must be covered exactly once.
pub fn assemble_frame(geom: FrameGeometry, depth: u8, blocks: &[PredictedBlock]) -> Result<Frame> {
    let mut frame = Frame::new(geom, depth)?;
    let mut written = vec![false; geom.pixel_count()];
    let max = frame.max_value() as f64;
    let w = geom.width();
    for pb in blocks {
        let b = pb.block;
        if b.u0 + b.size > w || b.v0 + b.size > geom.height() {
            return Err(Error::IncompleteGrid(format!("block at ({}, {}) exceeds frame", b.u0, b.v0)));
        }
        if pb.samples.len() != b.size * b.size {
            return Err(Error::IncompleteGrid(format!(
                "block at ({}, {}) has {} samples",
                b.u0,
                b.v0,
                pb.samples.len()
            )));
        }
        for j in 0..b.size {
            for i in 0..b.size {
                let idx = (b.v0 + j) * w + b.u0 + i;
                if written[idx] {
                    return Err(Error::IncompleteGrid(format!("pixel ({}, {}) covered twice", b.u0 + i, b.v0 + j)));
                }
                written[idx] = true;
                let s = pb.samples[j * b.size + i];
                frame.samples_mut()[idx] = s.round().clamp(0.0, max) as u16;
            }
        }
    }
    if let Some(missing) = written.iter().position(|&w| !w) {
        return Err(Error::IncompleteGrid(format!(
            "pixel ({}, {}) not covered",
            missing % w,
            missing / w
        )));
    }
    Ok(frame)
}

/// Motion-compensated prediction of a whole frame.
pub fn compensate_frame(reference: &Frame, field: &MotionField) -> Result<Frame> {
    if field.geometry() != reference.geometry() {
        return Err(Error::GeometryMismatch("motion field and reference differ".into()));
    }
    let blocks = field.block_specs();
    let predicted = blocks
        .par_iter()
        .zip(field.motions().par_iter())
        .map(|(b, m)| predict_block(reference, *b, m))
        .collect::<Result<Vec<_>>>()?;
    assemble_frame(reference.geometry(), reference.depth(), &predicted)
}
