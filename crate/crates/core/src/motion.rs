//! Affine motion on motion planes and the inverse-compositional update algebra.
//!
//! Parameters are ordered `(a, b, c, d, e, f)` for the six-parameter model and
//! `(a, b, e, f)` for the four-parameter (similarity) model, matching the
//! matrices
//!
//! ```text
//! six:  | a+1  b    e |      four: | a+1  b    e |
//!       | c    d+1  f |            | -b   a+1  f |
//!       | 0    0    1 |            | 0    0    1 |
//! ```

use std::ops::Mul;

use crate::error::{Error, Result};
use crate::geometry::{
    zeta_in, zeta_inv, FrameGeometry, Hemisphere, MotionPlane, PixelCoord, PlaneId, PlanePoint,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AffineModel {
    SixParam,
    FourParam,
}

impl AffineModel {
    #[inline]
    pub fn n_params(self) -> usize {
        match self {
            AffineModel::SixParam => 6,
            AffineModel::FourParam => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AffineParams {
    Six([f64; 6]),
    Four([f64; 4]),
}

impl AffineParams {
    pub fn zero(model: AffineModel) -> Self {
        match model {
            AffineModel::SixParam => AffineParams::Six([0.0; 6]),
            AffineModel::FourParam => AffineParams::Four([0.0; 4]),
        }
    }

    /// Parameters encoding a pure plane translation.
    pub fn translation(model: AffineModel, t: TranslationVector) -> Self {
        match model {
            AffineModel::SixParam => AffineParams::Six([0.0, 0.0, 0.0, 0.0, t.x, t.y]),
            AffineModel::FourParam => AffineParams::Four([0.0, 0.0, t.x, t.y]),
        }
    }

    /// Builds parameters from a slice in canonical order; the length selects
    /// the model.
    pub fn from_slice(values: &[f64]) -> Option<Self> {
        match values.len() {
            6 => Some(AffineParams::Six(values.try_into().ok()?)),
            4 => Some(AffineParams::Four(values.try_into().ok()?)),
            _ => None,
        }
    }

    pub fn model(&self) -> AffineModel {
        match self {
            AffineParams::Six(_) => AffineModel::SixParam,
            AffineParams::Four(_) => AffineModel::FourParam,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            AffineParams::Six(p) => p,
            AffineParams::Four(p) => p,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Euclidean norm of the parameter vector.
    pub fn norm(&self) -> f64 {
        self.values().iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Embeds four-parameter values into the six-parameter model
    /// (`c = -b`, `d = a`).
    pub fn to_six(&self) -> [f64; 6] {
        match *self {
            AffineParams::Six(p) => p,
            AffineParams::Four([a, b, e, f]) => [a, b, -b, a, e, f],
        }
    }

    pub fn matrix(&self) -> AffineMatrix {
        affine_matrix(self)
    }

    /// Reads the parameters of `model` back out of a matrix. For the
    /// four-parameter model the similarity part is projected onto the closest
    /// `((s, r), (-r, s))` form.
    pub fn from_matrix(m: &AffineMatrix, model: AffineModel) -> Self {
        let [[m00, m01, m02], [m10, m11, m12]] = m.rows;
        match model {
            AffineModel::SixParam => AffineParams::Six([m00 - 1.0, m01, m10, m11 - 1.0, m02, m12]),
            AffineModel::FourParam => {
                let s = 0.5 * (m00 + m11);
                let r = 0.5 * (m01 - m10);
                AffineParams::Four([s - 1.0, r, m02, m12])
            }
        }
    }
}

/// 3x3 homogeneous affine matrix; the implicit last row is `(0, 0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMatrix {
    pub rows: [[f64; 3]; 2],
}

impl Default for AffineMatrix {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineMatrix {
    pub const IDENTITY: AffineMatrix = AffineMatrix {
        rows: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        AffineMatrix {
            rows: [[1.0, 0.0, tx], [0.0, 1.0, ty]],
        }
    }

    #[inline]
    pub fn det2(&self) -> f64 {
        self.rows[0][0] * self.rows[1][1] - self.rows[0][1] * self.rows[1][0]
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [[a, b, e], [c, d, f]] = self.rows;
        (a * x + b * y + e, c * x + d * y + f)
    }

    /// Full 3x3 form, row-major.
    pub fn to_homogeneous(&self) -> [[f64; 3]; 3] {
        [self.rows[0], self.rows[1], [0.0, 0.0, 1.0]]
    }

    pub fn inverse(&self) -> Result<AffineMatrix> {
        invert_affine(self)
    }

    pub fn frobenius_distance(&self, other: &AffineMatrix) -> f64 {
        self.rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Frobenius norm of the full homogeneous matrix (including the fixed
    /// last row).
    pub fn frobenius_norm(&self) -> f64 {
        (self.rows.iter().flatten().map(|v| v * v).sum::<f64>() + 1.0).sqrt()
    }
}

impl Mul for AffineMatrix {
    type Output = AffineMatrix;

    fn mul(self, rhs: AffineMatrix) -> AffineMatrix {
        let [[a0, b0, e0], [c0, d0, f0]] = self.rows;
        let [[a1, b1, e1], [c1, d1, f1]] = rhs.rows;
        AffineMatrix {
            rows: [
                [a0 * a1 + b0 * c1, a0 * b1 + b0 * d1, a0 * e1 + b0 * f1 + e0],
                [c0 * a1 + d0 * c1, c0 * b1 + d0 * d1, c0 * e1 + d0 * f1 + f0],
            ],
        }
    }
}

pub fn affine_matrix(p: &AffineParams) -> AffineMatrix {
    match *p {
        AffineParams::Six([a, b, c, d, e, f]) => AffineMatrix {
            rows: [[a + 1.0, b, e], [c, d + 1.0, f]],
        },
        AffineParams::Four([a, b, e, f]) => AffineMatrix {
            rows: [[a + 1.0, b, e], [-b, a + 1.0, f]],
        },
    }
}

pub fn invert_affine(m: &AffineMatrix) -> Result<AffineMatrix> {
    let det = m.det2();
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::SingularTransform { det });
    }
    let [[a, b, e], [c, d, f]] = m.rows;
    let ia = d / det;
    let ib = -b / det;
    let ic = -c / det;
    let id = a / det;
    Ok(AffineMatrix {
        rows: [
            [ia, ib, -(ia * e + ib * f)],
            [ic, id, -(ic * e + id * f)],
        ],
    })
}

/// Matrix of the inverse incremental warp, `A(dp)^-1`.
pub fn invert_warp_params(delta: &AffineParams) -> Result<AffineMatrix> {
    invert_affine(&affine_matrix(delta))
}

/// Inverse-compositional update `A(p) <- A(p) * A(dp)^-1`.
pub fn compose_update(current: &AffineMatrix, delta: &AffineParams) -> Result<AffineMatrix> {
    Ok(*current * invert_warp_params(delta)?)
}

/// Translation on a motion plane (plane units) or, for the equirectangular
/// baseline, in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TranslationVector {
    pub x: f64,
    pub y: f64,
}

impl TranslationVector {
    pub const ZERO: TranslationVector = TranslationVector { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Motion model applied on a plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PlaneModel {
    Translation(TranslationVector),
    Affine(AffineParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneMotion {
    pub plane: PlaneId,
    pub hemisphere: Hemisphere,
    pub model: PlaneModel,
}

impl PlaneMotion {
    /// Affine matrix acting on the plane; translations become `(e, f)`.
    pub fn matrix(&self) -> AffineMatrix {
        match &self.model {
            PlaneModel::Translation(t) => AffineMatrix::translation(t.x, t.y),
            PlaneModel::Affine(p) => affine_matrix(p),
        }
    }
}

/// Motion of one block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlockMotion {
    /// Translation directly on the equirectangular raster, in pixels.
    Erp(TranslationVector),
    Plane(PlaneMotion),
}

impl BlockMotion {
    pub fn plane_translation(plane: PlaneId, hemisphere: Hemisphere, t: TranslationVector) -> Self {
        BlockMotion::Plane(PlaneMotion {
            plane,
            hemisphere,
            model: PlaneModel::Translation(t),
        })
    }

    pub fn plane_affine(plane: PlaneId, hemisphere: Hemisphere, p: AffineParams) -> Self {
        BlockMotion::Plane(PlaneMotion {
            plane,
            hemisphere,
            model: PlaneModel::Affine(p),
        })
    }

    /// True when the motion maps every point onto itself.
    pub fn is_identity(&self) -> bool {
        match self {
            BlockMotion::Erp(t) => t.x == 0.0 && t.y == 0.0,
            BlockMotion::Plane(pm) => pm.matrix() == AffineMatrix::IDENTITY,
        }
    }
}

/// Warps a pixel position with an affine matrix on the given plane,
/// `zeta^-1(A * zeta(x))`, keeping the hemisphere fixed.
#[inline]
pub fn warp_with_matrix(
    px: PixelCoord,
    plane: &MotionPlane,
    hemisphere: Hemisphere,
    m: &AffineMatrix,
    geom: FrameGeometry,
) -> Result<PixelCoord> {
    let pt = zeta_in(px, plane, hemisphere, geom)?;
    Ok(warp_plane_point(&pt, plane, m, geom))
}

/// Same as [`warp_with_matrix`] for a point already on the plane.
#[inline]
pub fn warp_plane_point(
    pt: &PlanePoint,
    plane: &MotionPlane,
    m: &AffineMatrix,
    geom: FrameGeometry,
) -> PixelCoord {
    let (x, y) = m.apply(pt.x, pt.y);
    zeta_inv(&PlanePoint::new(x, y, pt.hemisphere), plane, geom)
}

/// Translational MPA model: `zeta^-1(zeta(x) + t)`.
pub fn mpa_translate(
    px: PixelCoord,
    plane: &MotionPlane,
    hemisphere: Hemisphere,
    t: TranslationVector,
    geom: FrameGeometry,
) -> Result<PixelCoord> {
    let pt = zeta_in(px, plane, hemisphere, geom)?;
    Ok(zeta_inv(
        &PlanePoint::new(pt.x + t.x, pt.y + t.y, hemisphere),
        plane,
        geom,
    ))
}

/// Position in the reference frame that predicts pixel `px` under `motion`.
pub fn mpa_warp(px: PixelCoord, motion: &BlockMotion, geom: FrameGeometry) -> Result<PixelCoord> {
    match motion {
        BlockMotion::Erp(t) => Ok(PixelCoord::new(px.u + t.x, px.v + t.y)),
        BlockMotion::Plane(pm) => {
            let plane = MotionPlane::new(pm.plane);
            match &pm.model {
                PlaneModel::Translation(t) => mpa_translate(px, &plane, pm.hemisphere, *t, geom),
                PlaneModel::Affine(p) => {
                    warp_with_matrix(px, &plane, pm.hemisphere, &affine_matrix(p), geom)
                }
            }
        }
    }
}
