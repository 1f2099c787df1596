//! Block motion estimation: translational diamond search on the equirectangular
//! raster (TMC) or on motion planes (MPA), and affine refinement by the inverse
//! compositional Lucas-Kanade algorithm.

mod diamond;
mod iclk;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use diamond::{
    diamond_search, diamond_search_erp, diamond_search_translational, full_search,
    plane_translation_ssd, select_best_plane, LatticeMatch, PlaneChoice,
};
pub use iclk::{iclk_counters, iclk_precompute, iclk_refine, warp_jacobian, IcLkCounters, IcLkPrecomputed, IcLkSolver, IcLkStep};

use crate::compensation::BlockSpec;
use crate::error::{Error, Result};
use crate::field::{block_pixel_scale, MotionField};
use crate::frame::Frame;
use crate::geometry::{zeta_in, FrameGeometry, Hemisphere, MotionPlane, PlaneId};
use crate::motion::{AffineModel, BlockMotion, TranslationVector};

/// Block-matching parameters. The range is in pixels; on motion planes it is
/// converted with the local plane-units-per-pixel scale of each block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchConfig {
    pub search_range: f64,
    /// Sub-pixel precision is `1 / subpel_denominator`.
    pub subpel_denominator: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            search_range: 96.0,
            subpel_denominator: 8,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.search_range > 0.0) || !self.search_range.is_finite() {
            return Err(Error::InvalidConfig("search range must be positive".into()));
        }
        if !self.subpel_denominator.is_power_of_two() {
            return Err(Error::InvalidConfig(
                "sub-pixel precision must be a power of two fraction".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcLkConfig {
    pub max_iterations: usize,
    /// Stop once the norm of the parameter increment drops below this.
    pub epsilon: f64,
    /// Initial multiplier on the Gauss-Newton increment.
    pub step_gain: f64,
    /// Per-iteration decay of the excess gain: iteration `k` (from 0) uses
    /// `1 + (step_gain - 1) * gain_decay^k`. `1.0` keeps the gain constant.
    pub gain_decay: f64,
    /// Diagonal loading relative to `trace(H) / n`.
    pub hessian_damping: f64,
    /// Return the lowest-SSD iterate instead of the last one.
    pub divergence_guard: bool,
}

impl Default for IcLkConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            epsilon: 1e-6,
            step_gain: 2.0,
            gain_decay: 0.5,
            hessian_damping: 1e-8,
            divergence_guard: true,
        }
    }
}

impl IcLkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        if !(self.step_gain >= 1.0) {
            return Err(Error::InvalidConfig("step gain must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.gain_decay) {
            return Err(Error::InvalidConfig("gain decay must lie in [0, 1]".into()));
        }
        if !(self.hessian_damping >= 0.0) {
            return Err(Error::InvalidConfig("damping must be non-negative".into()));
        }
        Ok(())
    }

    /// Gain applied at iteration `k`.
    pub fn gain_at(&self, k: usize) -> f64 {
        1.0 + (self.step_gain - 1.0) * self.gain_decay.powi(k as i32)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EstimatorConfig {
    pub search: SearchConfig,
    pub iclk: IcLkConfig,
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.iclk.validate()
    }
}

/// Estimation methods compared in the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Translational diamond search on the equirectangular raster.
    Tmc,
    /// Translational search on all three motion planes, best plane kept.
    MpaTranslational,
    /// Best plane, then six-parameter affine refinement.
    MpaIc6,
    /// Best plane, then four-parameter affine refinement.
    MpaIc4,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Tmc, Mode::MpaTranslational, Mode::MpaIc6, Mode::MpaIc4];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Tmc => "tmc",
            Mode::MpaTranslational => "mpa-t",
            Mode::MpaIc6 => "mpa-ic6p",
            Mode::MpaIc4 => "mpa-ic4p",
        }
    }

    pub fn affine_model(self) -> Option<AffineModel> {
        match self {
            Mode::MpaIc6 => Some(AffineModel::SixParam),
            Mode::MpaIc4 => Some(AffineModel::FourParam),
            _ => None,
        }
    }

    pub fn to_byte(self) -> u8 {
        self as u8
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Mode::ALL.get(b as usize).copied()
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown mode {s:?}")))
    }
}

/// Template samples of one block.
#[derive(Clone, Debug)]
pub struct TemplateBlock<'a> {
    pub frame: &'a Frame,
    pub block: BlockSpec,
    pub samples: Vec<f64>,
}

impl<'a> TemplateBlock<'a> {
    pub fn new(frame: &'a Frame, block: BlockSpec) -> Self {
        let samples = block
            .pixels()
            .map(|px| frame.get(px.u as usize, px.v as usize) as f64)
            .collect();
        Self {
            frame,
            block,
            samples,
        }
    }
}

/// A block mapped onto one motion plane: the plane coordinates of every pixel
/// (raster order) and the local pixel scale at the block center.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneBlock {
    pub block: BlockSpec,
    pub plane: PlaneId,
    pub hemisphere: Hemisphere,
    pub coords: Vec<(f64, f64)>,
    /// Plane units per pixel at the block center.
    pub pixel_scale: f64,
}

impl PlaneBlock {
    /// Maps the block onto `plane`. Returns `None` when any pixel falls in the
    /// singular band or on the other hemisphere than the block center.
    pub fn new(block: BlockSpec, plane: PlaneId, geom: FrameGeometry) -> Option<Self> {
        let mp = MotionPlane::new(plane);
        let z = mp.rotate(&crate::geometry::erp_to_sphere(block.center(), geom)).z;
        let hemisphere = Hemisphere::of(z);
        Self::with_hemisphere(block, plane, hemisphere, geom)
    }

    pub fn with_hemisphere(
        block: BlockSpec,
        plane: PlaneId,
        hemisphere: Hemisphere,
        geom: FrameGeometry,
    ) -> Option<Self> {
        let mp = MotionPlane::new(plane);
        let coords = block
            .pixels()
            .map(|px| zeta_in(px, &mp, hemisphere, geom).map(|p| (p.x, p.y)))
            .collect::<Result<Vec<_>>>()
            .ok()?;
        let pixel_scale = block_pixel_scale(geom, block, plane, hemisphere);
        Some(Self {
            block,
            plane,
            hemisphere,
            coords,
            pixel_scale,
        })
    }
}

/// Result of estimating one block.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationResult {
    pub motion: BlockMotion,
    pub ssd: f64,
    pub iterations: usize,
    pub converged: bool,
    /// How many times gradients, steepest-descent images and the Hessian were
    /// computed for this block.
    pub precomputations: usize,
}

/// Per-block diagnostics collected by [`estimate_frame`].
#[derive(Clone, Debug, PartialEq)]
pub struct BlockReport {
    pub block: BlockSpec,
    /// SSD of the translational stage (plane or ERP).
    pub translational_ssd: f64,
    /// SSD of the final motion.
    pub ssd: f64,
    pub iterations: usize,
    pub converged: bool,
    pub precomputations: usize,
    /// Affine refinement was attempted but the block kept its translation.
    pub fell_back: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameEstimate {
    pub field: MotionField,
    pub blocks: Vec<BlockReport>,
}

impl FrameEstimate {
    pub fn total_ssd(&self) -> f64 {
        self.blocks.iter().map(|b| b.ssd).sum()
    }

    pub fn precomputations(&self) -> usize {
        self.blocks.iter().map(|b| b.precomputations).sum()
    }
}

/// Estimates one block with the given mode.
pub fn estimate_block(
    template: &Frame,
    reference: &Frame,
    block: BlockSpec,
    mode: Mode,
    cfg: &EstimatorConfig,
) -> (BlockMotion, BlockReport) {
    let tb = TemplateBlock::new(template, block);
    let erp = |tb: &TemplateBlock| {
        let (t, ssd) = diamond_search_erp(tb, reference, &cfg.search);
        let report = BlockReport {
            block,
            translational_ssd: ssd,
            ssd,
            iterations: 0,
            converged: true,
            precomputations: 0,
            fell_back: false,
        };
        (BlockMotion::Erp(t), report)
    };
    if mode == Mode::Tmc {
        return erp(&tb);
    }
    // Blocks too large to fit on any plane keep the raster search.
    let Some(choice) = select_best_plane(&tb, reference, &cfg.search) else {
        return erp(&tb);
    };
    let pb = &choice.plane_block;
    let translational = BlockMotion::plane_translation(pb.plane, pb.hemisphere, choice.translation);
    let mut report = BlockReport {
        block,
        translational_ssd: choice.ssd,
        ssd: choice.ssd,
        iterations: 0,
        converged: true,
        precomputations: 0,
        fell_back: false,
    };
    let Some(model) = mode.affine_model() else {
        return (translational, report);
    };
    match iclk_refine(&tb, reference, pb, choice.translation, model, &cfg.iclk) {
        Ok(res) => {
            report.ssd = res.ssd;
            report.iterations = res.iterations;
            report.converged = res.converged;
            report.precomputations = res.precomputations;
            // The guard already guarantees this; it also covers guard-off runs.
            if res.ssd <= choice.ssd {
                (res.motion, report)
            } else {
                report.ssd = choice.ssd;
                report.fell_back = true;
                (translational, report)
            }
        }
        Err(_) => {
            // The precomputation ran and rejected the block.
            report.precomputations = 1;
            report.fell_back = true;
            report.converged = false;
            (translational, report)
        }
    }
}

/// Estimates a complete motion field. Blocks are processed in parallel on the
/// current rayon pool; the result does not depend on scheduling.
pub fn estimate_frame(
    template: &Frame,
    reference: &Frame,
    mode: Mode,
    block_size: usize,
    cfg: &EstimatorConfig,
) -> Result<FrameEstimate> {
    template.check_same_layout(reference)?;
    cfg.validate()?;
    let geom = template.geometry();
    let blocks = BlockSpec::grid(geom, block_size)?;
    let (motions, reports): (Vec<_>, Vec<_>) = blocks
        .par_iter()
        .map(|&b| estimate_block(template, reference, b, mode, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .unzip();
    Ok(FrameEstimate {
        field: MotionField::new(geom, block_size, motions)?,
        blocks: reports,
    })
}

/// Zero plane translation for a block on its first valid plane, used where a
/// caller needs a neutral plane motion.
pub fn neutral_plane_motion(block: BlockSpec, geom: FrameGeometry) -> BlockMotion {
    PlaneId::ALL
        .into_iter()
        .find_map(|id| PlaneBlock::new(block, id, geom))
        .map(|pb| BlockMotion::plane_translation(pb.plane, pb.hemisphere, TranslationVector::ZERO))
        .unwrap_or(BlockMotion::Erp(TranslationVector::ZERO))
}
