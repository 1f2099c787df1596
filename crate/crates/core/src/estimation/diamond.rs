//! Diamond-pattern block matching.
//!
//! The search runs on an integer lattice whose unit is the sub-pixel
//! precision (1/8 pixel by default). The integer phase uses the large diamond
//! pattern until the center wins, then one small-diamond refinement; the
//! sub-pixel phase halves the step down to one lattice unit, testing the
//! eight neighbours at each step. Ties keep the current position.

use std::collections::HashSet;

use crate::estimation::{PlaneBlock, SearchConfig, TemplateBlock};
use crate::frame::{sample_bilinear, Frame};
use crate::geometry::{zeta_inv, MotionPlane, PixelCoord, PlaneId, PlanePoint};
use crate::motion::TranslationVector;

const LARGE_DIAMOND: [(i32, i32); 8] = [
    (0, -2),
    (1, -1),
    (2, 0),
    (1, 1),
    (0, 2),
    (-1, 1),
    (-2, 0),
    (-1, -1),
];
const SMALL_DIAMOND: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
const SQUARE: [(i32, i32); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

/// Outcome of a lattice search: position in lattice units and its cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeMatch {
    pub pos: (i32, i32),
    pub cost: f64,
}

/// Minimizes `cost` over lattice points within `radius` (lattice units,
/// Euclidean) of the origin.
///
/// `cost(i, j, bound)` may stop early and return any value `>= bound` once
/// the partial cost reaches `bound`; only strict improvements are accepted, so
/// the result is the same as with exact costs. `unit` is the number of
/// lattice points per integer step.
pub fn diamond_search<F>(mut cost: F, radius: i32, unit: i32) -> LatticeMatch
where
    F: FnMut(i32, i32, f64) -> f64,
{
    let r2 = radius as i64 * radius as i64;
    let inside = |(i, j): (i32, i32)| (i as i64).pow(2) + (j as i64).pow(2) <= r2;
    let mut visited: HashSet<(i32, i32)> = HashSet::new();
    let mut center = (0, 0);
    let mut best = cost(0, 0, f64::INFINITY);
    visited.insert(center);

    // Visited points can never beat the running best: they were either
    // earlier centers or lost against one.
    let mut probe = |center: (i32, i32),
                     best: &mut f64,
                     pattern: &[(i32, i32)],
                     step: i32,
                     visited: &mut HashSet<(i32, i32)>|
     -> Option<(i32, i32)> {
        let mut winner = None;
        for &(di, dj) in pattern {
            let p = (center.0 + di * step, center.1 + dj * step);
            if !inside(p) || !visited.insert(p) {
                continue;
            }
            let c = cost(p.0, p.1, *best);
            if c < *best {
                *best = c;
                winner = Some(p);
            }
        }
        winner
    };

    let max_moves = (2 * radius / unit.max(1) + 4) as usize;
    if unit > 0 {
        for _ in 0..max_moves {
            match probe(center, &mut best, &LARGE_DIAMOND, unit, &mut visited) {
                Some(p) => center = p,
                None => break,
            }
        }
        if let Some(p) = probe(center, &mut best, &SMALL_DIAMOND, unit, &mut visited) {
            center = p;
        }
    }
    let mut step = unit / 2;
    while step >= 1 {
        for _ in 0..8 {
            match probe(center, &mut best, &SQUARE, step, &mut visited) {
                Some(p) => center = p,
                None => break,
            }
        }
        step /= 2;
    }
    LatticeMatch { pos: center, cost: best }
}

/// SSD of the template against the reference sampled at `positions`,
/// abandoning once `bound` is reached (checked per row).
#[inline]
fn bounded_ssd(
    template: &[f64],
    size: usize,
    bound: f64,
    mut position: impl FnMut(usize) -> PixelCoord,
    reference: &Frame,
) -> f64 {
    let mut acc = 0.0;
    for row in 0..size {
        for k in row * size..(row + 1) * size {
            let d = sample_bilinear(reference, position(k)) - template[k];
            acc += d * d;
        }
        if acc >= bound {
            return acc;
        }
    }
    acc
}

/// SSD of predicting the block with plane translation `t`.
pub fn plane_translation_ssd(
    template: &TemplateBlock,
    pb: &PlaneBlock,
    reference: &Frame,
    t: TranslationVector,
    bound: f64,
) -> f64 {
    let plane = MotionPlane::new(pb.plane);
    let geom = reference.geometry();
    bounded_ssd(
        &template.samples,
        template.block.size,
        bound,
        |k| {
            let (x, y) = pb.coords[k];
            zeta_inv(&PlanePoint::new(x + t.x, y + t.y, pb.hemisphere), &plane, geom)
        },
        reference,
    )
}

/// Translational motion search on one motion plane.
pub fn diamond_search_translational(
    template: &TemplateBlock,
    reference: &Frame,
    pb: &PlaneBlock,
    cfg: &SearchConfig,
) -> (TranslationVector, f64) {
    let denom = cfg.subpel_denominator as i32;
    let lattice = pb.pixel_scale / denom as f64;
    let radius = (cfg.search_range * denom as f64).floor() as i32;
    let m = diamond_search(
        |i, j, bound| {
            let t = TranslationVector::new(i as f64 * lattice, j as f64 * lattice);
            plane_translation_ssd(template, pb, reference, t, bound)
        },
        radius,
        denom,
    );
    (
        TranslationVector::new(m.pos.0 as f64 * lattice, m.pos.1 as f64 * lattice),
        m.cost,
    )
}

/// Translational search directly on the equirectangular raster (the TMC
/// baseline); the vector is in pixels.
pub fn diamond_search_erp(
    template: &TemplateBlock,
    reference: &Frame,
    cfg: &SearchConfig,
) -> (TranslationVector, f64) {
    let denom = cfg.subpel_denominator as i32;
    let radius = (cfg.search_range * denom as f64).floor() as i32;
    let b = template.block;
    let m = diamond_search(
        |i, j, bound| {
            let tx = i as f64 / denom as f64;
            let ty = j as f64 / denom as f64;
            bounded_ssd(
                &template.samples,
                b.size,
                bound,
                |k| {
                    PixelCoord::new(
                        (b.u0 + k % b.size) as f64 + tx,
                        (b.v0 + k / b.size) as f64 + ty,
                    )
                },
                reference,
            )
        },
        radius,
        denom,
    );
    (
        TranslationVector::new(m.pos.0 as f64 / denom as f64, m.pos.1 as f64 / denom as f64),
        m.cost,
    )
}

/// Best plane for a block by translational search over all valid planes.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneChoice {
    pub plane_block: PlaneBlock,
    pub translation: TranslationVector,
    pub ssd: f64,
    /// Per-plane SSDs in [`PlaneId::ALL`] order; `None` where the block is not
    /// representable on the plane.
    pub per_plane: [Option<f64>; 3],
}

/// Runs the translational search on every plane the block fits on and keeps
/// the lowest SSD. Ties go to the earlier plane in
/// front-back, left-right, top-bottom order.
pub fn select_best_plane(
    template: &TemplateBlock,
    reference: &Frame,
    cfg: &SearchConfig,
) -> Option<PlaneChoice> {
    let geom = reference.geometry();
    let mut best: Option<PlaneChoice> = None;
    let mut per_plane = [None; 3];
    for (k, id) in PlaneId::ALL.into_iter().enumerate() {
        let Some(pb) = PlaneBlock::new(template.block, id, geom) else {
            continue;
        };
        let (t, ssd) = diamond_search_translational(template, reference, &pb, cfg);
        per_plane[k] = Some(ssd);
        if best.as_ref().is_none_or(|b| ssd < b.ssd) {
            best = Some(PlaneChoice {
                plane_block: pb,
                translation: t,
                ssd,
                per_plane: [None; 3],
            });
        }
    }
    best.map(|mut b| {
        b.per_plane = per_plane;
        b
    })
}

/// Exhaustive lattice search, used as a reference for the diamond search.
pub fn full_search<F>(mut cost: F, radius: i32, step: i32) -> LatticeMatch
where
    F: FnMut(i32, i32) -> f64,
{
    let mut best = LatticeMatch {
        pos: (0, 0),
        cost: cost(0, 0),
    };
    let r2 = radius as i64 * radius as i64;
    let lim = radius / step * step;
    let mut j = -lim;
    while j <= lim {
        let mut i = -lim;
        while i <= lim {
            if (i as i64).pow(2) + (j as i64).pow(2) <= r2 {
                let c = cost(i, j);
                if c < best.cost {
                    best = LatticeMatch { pos: (i, j), cost: c };
                }
            }
            i += step;
        }
        j += step;
    }
    best
}
