//! Inverse compositional Lucas-Kanade refinement of affine plane motion.
//!
//! The warp is `W(x; p) = zeta^-1(A(p) zeta(x))`. Template gradients, the
//! warp Jacobian at `p = 0`, the steepest-descent images and the (inverted)
//! Hessian are computed once per block. Each iteration then only warps the
//! reference with the current matrix, projects the error onto the
//! steepest-descent images and updates `A <- A * A(dp)^-1`.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::estimation::{EstimationResult, IcLkConfig, PlaneBlock, TemplateBlock};
use crate::frame::{sample_bilinear, Frame};
use crate::geometry::{zeta_inv, zeta_jacobian, MotionPlane, PlanePoint};
use crate::motion::{compose_update, AffineMatrix, AffineModel, AffineParams, BlockMotion, TranslationVector};

const MAX_CONDITION: f64 = 1e12;

static PRECOMPUTE_CALLS: AtomicU64 = AtomicU64::new(0);
static STEP_CALLS: AtomicU64 = AtomicU64::new(0);

/// Process-wide totals of [`iclk_precompute`] calls and solver iterations
/// since start-up.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IcLkCounters {
    pub precomputations: u64,
    pub steps: u64,
}

pub fn iclk_counters() -> IcLkCounters {
    IcLkCounters {
        precomputations: PRECOMPUTE_CALLS.load(Ordering::Relaxed),
        steps: STEP_CALLS.load(Ordering::Relaxed),
    }
}

/// Quantities that stay fixed across iterations.
#[derive(Clone, Debug)]
pub struct IcLkPrecomputed {
    pub model: AffineModel,
    /// Steepest-descent images, `n` values per pixel in raster order.
    pub steepest_descent: Vec<f64>,
    /// Damped Gauss-Newton Hessian, row-major `n x n`.
    pub hessian: Vec<f64>,
    pub hessian_inv: Vec<f64>,
    pub condition: f64,
}

impl IcLkPrecomputed {
    #[inline]
    pub fn n(&self) -> usize {
        self.model.n_params()
    }
}

/// Columns of `d(A(p) (X, Y, 1)) / dp` at `p = 0`, one row per output
/// coordinate.
#[inline]
fn plane_param_jacobian(model: AffineModel, x: f64, y: f64) -> ([f64; 6], [f64; 6]) {
    match model {
        AffineModel::SixParam => ([x, y, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, x, y, 0.0, 1.0]),
        AffineModel::FourParam => ([x, y, 1.0, 0.0, 0.0, 0.0], [y, -x, 0.0, 1.0, 0.0, 0.0]),
    }
}

/// Per-pixel `dW/dp` at `p = 0` in pixel units: the `zeta^-1` Jacobian times
/// the plane-side parameter Jacobian. Rows are `u` and `v`.
pub fn warp_jacobian(
    pb: &PlaneBlock,
    k: usize,
    model: AffineModel,
    geom: crate::geometry::FrameGeometry,
) -> Result<([f64; 6], [f64; 6])> {
    let plane = MotionPlane::new(pb.plane);
    let (x, y) = pb.coords[k];
    let j = zeta_jacobian(&PlanePoint::new(x, y, pb.hemisphere), &plane, geom)?;
    let (fx, fy) = plane_param_jacobian(model, x, y);
    let mut du = [0.0; 6];
    let mut dv = [0.0; 6];
    for i in 0..model.n_params() {
        du[i] = j[(0, 0)] * fx[i] + j[(0, 1)] * fy[i];
        dv[i] = j[(1, 0)] * fx[i] + j[(1, 1)] * fy[i];
    }
    Ok((du, dv))
}

/// Template gradient by central differences (columns wrap, rows clamp).
fn template_gradient(frame: &Frame, u: usize, v: usize) -> (f64, f64) {
    let (u, v) = (u as i64, v as i64);
    let gx = (frame.get_wrapped(u + 1, v) as f64 - frame.get_wrapped(u - 1, v) as f64) / 2.0;
    let gy = (frame.get_wrapped(u, v + 1) as f64 - frame.get_wrapped(u, v - 1) as f64) / 2.0;
    (gx, gy)
}

pub fn iclk_precompute(
    template: &TemplateBlock,
    pb: &PlaneBlock,
    model: AffineModel,
    damping: f64,
) -> Result<IcLkPrecomputed> {
    PRECOMPUTE_CALLS.fetch_add(1, Ordering::Relaxed);
    let n = model.n_params();
    let geom = template.frame.geometry();
    let b = template.block;
    let mut sd = Vec::with_capacity(b.size * b.size * n);
    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut row = [0.0; 6];
    for (k, px) in b.pixels().enumerate() {
        let (gx, gy) = template_gradient(template.frame, px.u as usize, px.v as usize);
        let (du, dv) = warp_jacobian(pb, k, model, geom)?;
        for i in 0..n {
            row[i] = gx * du[i] + gy * dv[i];
        }
        for i in 0..n {
            for j in i..n {
                h[(i, j)] += row[i] * row[j];
            }
        }
        sd.extend_from_slice(&row[..n]);
    }
    for i in 0..n {
        for j in 0..i {
            h[(i, j)] = h[(j, i)];
        }
    }
    let trace = h.trace();
    if !(trace > 0.0) || !trace.is_finite() {
        return Err(Error::IllConditionedHessian { cond: f64::INFINITY });
    }
    let load = damping * trace / n as f64;
    for i in 0..n {
        h[(i, i)] += load;
    }
    let eig = SymmetricEigen::new(h.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditionedHessian { cond: condition });
    }
    let inv = h
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::IllConditionedHessian { cond: condition })?;
    Ok(IcLkPrecomputed {
        model,
        steepest_descent: sd,
        hessian: h.transpose().iter().copied().collect(),
        hessian_inv: inv.transpose().iter().copied().collect(),
        condition,
    })
}

/// One inverse-compositional iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcLkStep {
    /// SSD of the matrix the step started from.
    pub ssd: f64,
    /// Scaled parameter increment.
    pub delta: AffineParams,
    pub next: AffineMatrix,
}

/// Per-block solver holding the precomputed quantities.
pub struct IcLkSolver<'a> {
    template: &'a TemplateBlock<'a>,
    reference: &'a Frame,
    pb: &'a PlaneBlock,
    plane: MotionPlane,
    pre: IcLkPrecomputed,
}

impl<'a> IcLkSolver<'a> {
    pub fn new(
        template: &'a TemplateBlock<'a>,
        reference: &'a Frame,
        pb: &'a PlaneBlock,
        model: AffineModel,
        damping: f64,
    ) -> Result<Self> {
        template.frame.check_same_layout(reference)?;
        let pre = iclk_precompute(template, pb, model, damping)?;
        Ok(Self {
            template,
            reference,
            pb,
            plane: MotionPlane::new(pb.plane),
            pre,
        })
    }

    pub fn precomputed(&self) -> &IcLkPrecomputed {
        &self.pre
    }

    #[inline]
    fn warped_sample(&self, m: &AffineMatrix, k: usize) -> f64 {
        let (x, y) = self.pb.coords[k];
        let (wx, wy) = m.apply(x, y);
        let px = zeta_inv(
            &PlanePoint::new(wx, wy, self.pb.hemisphere),
            &self.plane,
            self.reference.geometry(),
        );
        sample_bilinear(self.reference, px)
    }

    /// SSD between the template and the reference warped with `m`.
    pub fn ssd(&self, m: &AffineMatrix) -> f64 {
        (0..self.template.samples.len())
            .map(|k| {
                let d = self.warped_sample(m, k) - self.template.samples[k];
                d * d
            })
            .sum()
    }

    pub fn step(&self, m: &AffineMatrix, gain: f64) -> Result<IcLkStep> {
        STEP_CALLS.fetch_add(1, Ordering::Relaxed);
        let n = self.pre.n();
        let mut b = [0.0; 6];
        let mut ssd = 0.0;
        let sd = &self.pre.steepest_descent;
        for (k, &t) in self.template.samples.iter().enumerate() {
            let e = self.warped_sample(m, k) - t;
            ssd += e * e;
            let row = &sd[k * n..(k + 1) * n];
            for i in 0..n {
                b[i] += row[i] * e;
            }
        }
        let mut dp = [0.0; 6];
        for i in 0..n {
            let hrow = &self.pre.hessian_inv[i * n..(i + 1) * n];
            dp[i] = gain * hrow.iter().zip(&b[..n]).map(|(h, g)| h * g).sum::<f64>();
        }
        let delta = AffineParams::from_slice(&dp[..n]).expect("n is 4 or 6");
        let next = compose_update(m, &delta)?;
        Ok(IcLkStep { ssd, delta, next })
    }
}

/// Refines a plane translation into an affine motion of `model`.
///
/// The translation seeds `e, f`; the linear part starts at identity. With the
/// divergence guard on, the lowest-SSD iterate is returned, which is never
/// worse than the seed.
pub fn iclk_refine(
    template: &TemplateBlock,
    reference: &Frame,
    pb: &PlaneBlock,
    init: TranslationVector,
    model: AffineModel,
    cfg: &IcLkConfig,
) -> Result<EstimationResult> {
    let solver = IcLkSolver::new(template, reference, pb, model, cfg.hessian_damping)?;
    let mut current = AffineMatrix::translation(init.x, init.y);
    let mut best: Option<(AffineMatrix, f64)> = None;
    let mut keep_best = |m: AffineMatrix, ssd: f64| {
        if best.is_none_or(|(_, s)| ssd < s) {
            best = Some((m, ssd));
        }
    };
    let mut iterations = 0;
    let mut converged = false;
    for k in 0..cfg.max_iterations {
        let step = match solver.step(&current, cfg.gain_at(k)) {
            Ok(s) if s.delta.is_finite() => s,
            _ => break,
        };
        keep_best(current, step.ssd);
        iterations += 1;
        current = step.next;
        if step.delta.norm() < cfg.epsilon {
            converged = true;
            break;
        }
    }
    let last_ssd = solver.ssd(&current);
    keep_best(current, last_ssd);
    let (m, ssd) = if cfg.divergence_guard {
        best.expect("at least the final iterate is recorded")
    } else {
        (current, last_ssd)
    };
    Ok(EstimationResult {
        motion: BlockMotion::plane_affine(pb.plane, pb.hemisphere, AffineParams::from_matrix(&m, model)),
        ssd,
        iterations,
        converged,
        precomputations: 1,
    })
}
