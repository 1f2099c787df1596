//! Equirectangular, unit-sphere and motion-plane coordinate mappings.
//!
//! Axis convention: `y` points up, `z` to the front and `x` to the right.
//! Longitude is measured from `+z` toward `+x`. Pixel `(u, v)` is sampled at
//! its center, i.e. at `(u + 0.5, v + 0.5)` in continuous raster units, so the
//! frame center `(W/2 - 0.5, H/2 - 0.5)` maps exactly onto the front axis.
//!
//! A motion plane is the gnomonic (perspective) projection of the sphere after
//! rotating it by `R`. Each plane serves both hemispheres: the sign of the
//! rotated `z` component is kept next to the plane coordinates so that the
//! mapping stays invertible on the whole sphere.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Matrix3, Vector3};

use crate::error::{Error, Result};

/// Minimum magnitude of the rotated `z` component for a point to be mapped
/// onto a motion plane. Bounds plane coordinates to roughly `|X|, |Y| <= 20`.
pub const EPS_PLANE: f64 = 0.05;

/// Dimensions of an equirectangular frame. Width is always twice the height.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FrameGeometry {
    width: usize,
    height: usize,
}

impl FrameGeometry {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidGeometry {
                width,
                height,
                reason: "dimensions must be positive",
            });
        }
        if width != 2 * height {
            return Err(Error::InvalidGeometry {
                width,
                height,
                reason: "equirectangular frames need width = 2 * height",
            });
        }
        Ok(Self { width, height })
    }

    /// Geometry for a given height (`W = 2H`).
    pub fn with_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Continuous pixel position; `u` is the column, `v` the row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    #[inline]
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpherePoint(pub Vector3<f64>);

impl SpherePoint {
    /// Normalizes `v` onto the sphere.
    pub fn normalized(v: Vector3<f64>) -> Self {
        Self(v.normalize())
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.0.x
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.0.y
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.0.z
    }
}

/// The three canonical motion planes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PlaneId {
    FrontBack = 0,
    LeftRight = 1,
    TopBottom = 2,
}

impl PlaneId {
    /// Also the tie-break order used by plane selection.
    pub const ALL: [PlaneId; 3] = [PlaneId::FrontBack, PlaneId::LeftRight, PlaneId::TopBottom];

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(PlaneId::FrontBack),
            1 => Some(PlaneId::LeftRight),
            2 => Some(PlaneId::TopBottom),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlaneId::FrontBack => "front-back",
            PlaneId::LeftRight => "left-right",
            PlaneId::TopBottom => "top-bottom",
        }
    }
}

/// Which side of a motion plane a point lies on (sign of the rotated `z`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Hemisphere {
    Front,
    Back,
}

impl Hemisphere {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Hemisphere::Front => 1.0,
            Hemisphere::Back => -1.0,
        }
    }

    #[inline]
    pub fn of(z: f64) -> Self {
        if z >= 0.0 {
            Hemisphere::Front
        } else {
            Hemisphere::Back
        }
    }

    pub fn to_byte(self) -> u8 {
        match self {
            Hemisphere::Front => 1,
            Hemisphere::Back => 0xff,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            1 => Some(Hemisphere::Front),
            0xff => Some(Hemisphere::Back),
            _ => None,
        }
    }
}

/// A motion plane: identifier plus the rotation taking sphere points into the
/// plane's frame (plane normal along `+z`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionPlane {
    pub id: PlaneId,
    pub rotation: Matrix3<f64>,
}

impl MotionPlane {
    pub fn new(id: PlaneId) -> Self {
        plane_rotation(id)
    }

    #[inline]
    pub fn rotate(&self, q: &SpherePoint) -> Vector3<f64> {
        self.rotation * q.0
    }
}

/// Gnomonic plane coordinates with the hemisphere they belong to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
    pub hemisphere: Hemisphere,
}

impl PlanePoint {
    #[inline]
    pub const fn new(x: f64, y: f64, hemisphere: Hemisphere) -> Self {
        Self { x, y, hemisphere }
    }
}

/// Longitude/latitude of a (possibly out-of-range) pixel. `u` wraps, `v` is
/// clamped to the latitude range.
#[inline]
fn pixel_angles(px: PixelCoord, geom: FrameGeometry) -> (f64, f64) {
    let w = geom.width as f64;
    let h = geom.height as f64;
    let u = px.u.rem_euclid(w);
    let v = px.v.clamp(-0.5, h - 0.5);
    let lon = 2.0 * PI * (u + 0.5) / w - PI;
    let lat = FRAC_PI_2 - PI * (v + 0.5) / h;
    (lon, lat)
}

pub fn erp_to_sphere(px: PixelCoord, geom: FrameGeometry) -> SpherePoint {
    let (lon, lat) = pixel_angles(px, geom);
    let (sin_lon, cos_lon) = lon.sin_cos();
    let (sin_lat, cos_lat) = lat.sin_cos();
    SpherePoint(Vector3::new(cos_lat * sin_lon, sin_lat, cos_lat * cos_lon))
}

/// Inverse of [`erp_to_sphere`]. At the poles the longitude is taken as 0.
pub fn sphere_to_erp(q: &SpherePoint, geom: FrameGeometry) -> PixelCoord {
    sphere_vec_to_erp(&q.0, geom)
}

#[inline]
fn sphere_vec_to_erp(q: &Vector3<f64>, geom: FrameGeometry) -> PixelCoord {
    let w = geom.width as f64;
    let h = geom.height as f64;
    let horiz = q.x * q.x + q.z * q.z;
    let lon = if horiz < 1e-30 { 0.0 } else { q.x.atan2(q.z) };
    let lat = q.y.clamp(-1.0, 1.0).asin();
    let u = ((lon + PI) * w / (2.0 * PI) - 0.5).rem_euclid(w);
    let v = (FRAC_PI_2 - lat) * h / PI - 0.5;
    PixelCoord { u, v }
}

pub fn plane_rotation(id: PlaneId) -> MotionPlane {
    #[rustfmt::skip]
    let rotation = match id {
        PlaneId::FrontBack => Matrix3::identity(),
        // -90 degrees about y: the +x (right) direction becomes the normal.
        PlaneId::LeftRight => Matrix3::new(
            0.0, 0.0, -1.0,
            0.0, 1.0,  0.0,
            1.0, 0.0,  0.0,
        ),
        // +90 degrees about x: the +y (up) direction becomes the normal.
        PlaneId::TopBottom => Matrix3::new(
            1.0, 0.0,  0.0,
            0.0, 0.0, -1.0,
            0.0, 1.0,  0.0,
        ),
    };
    MotionPlane { id, rotation }
}

pub fn sphere_to_plane(q: &SpherePoint, plane: &MotionPlane) -> Result<PlanePoint> {
    let r = plane.rotate(q);
    if r.z.abs() < EPS_PLANE {
        return Err(Error::NearPlaneSingularity { z: r.z });
    }
    Ok(PlanePoint {
        x: r.x / r.z,
        y: r.y / r.z,
        hemisphere: Hemisphere::of(r.z),
    })
}

#[inline]
fn plane_to_rotated(pt: &PlanePoint) -> Vector3<f64> {
    let s = pt.hemisphere.sign() / (pt.x * pt.x + pt.y * pt.y + 1.0).sqrt();
    Vector3::new(pt.x * s, pt.y * s, s)
}

pub fn plane_to_sphere(pt: &PlanePoint, plane: &MotionPlane) -> SpherePoint {
    SpherePoint(plane.rotation.transpose() * plane_to_rotated(pt))
}

/// Frame-to-plane transform: pixel coordinates onto the motion plane.
pub fn zeta(px: PixelCoord, plane: &MotionPlane, geom: FrameGeometry) -> Result<PlanePoint> {
    sphere_to_plane(&erp_to_sphere(px, geom), plane)
}

/// Like [`zeta`] but pinned to a given hemisphere; points on the other side of
/// the plane (or inside the singular band) are rejected.
pub fn zeta_in(
    px: PixelCoord,
    plane: &MotionPlane,
    hemisphere: Hemisphere,
    geom: FrameGeometry,
) -> Result<PlanePoint> {
    let r = plane.rotate(&erp_to_sphere(px, geom));
    if hemisphere.sign() * r.z < EPS_PLANE {
        return Err(Error::NearPlaneSingularity { z: r.z });
    }
    Ok(PlanePoint {
        x: r.x / r.z,
        y: r.y / r.z,
        hemisphere,
    })
}

/// Plane-to-frame transform, inverse of [`zeta`].
pub fn zeta_inv(pt: &PlanePoint, plane: &MotionPlane, geom: FrameGeometry) -> PixelCoord {
    let q = plane.rotation.transpose() * plane_to_rotated(pt);
    sphere_vec_to_erp(&q, geom)
}

/// `d(u, v) / d(X, Y)` of [`zeta_inv`] at `pt`.
///
/// Fails near the poles of the equirectangular frame, where the longitude
/// derivative diverges (any angular derivative above `1 / EPS_PLANE^2`).
pub fn zeta_jacobian(
    pt: &PlanePoint,
    plane: &MotionPlane,
    geom: FrameGeometry,
) -> Result<Matrix2<f64>> {
    let h = pt.hemisphere.sign();
    let r2 = pt.x * pt.x + pt.y * pt.y + 1.0;
    let r = r2.sqrt();
    let r3 = r2 * r;
    let p = Vector3::new(pt.x, pt.y, 1.0);
    let dqr_dx = (Vector3::x() / r - p * (pt.x / r3)) * h;
    let dqr_dy = (Vector3::y() / r - p * (pt.y / r3)) * h;
    let rt = plane.rotation.transpose();
    let q = rt * (p * (h / r));
    let dq_dx = rt * dqr_dx;
    let dq_dy = rt * dqr_dy;

    let horiz = q.x * q.x + q.z * q.z;
    let limit = 1.0 / (EPS_PLANE * EPS_PLANE);
    if horiz < 1.0 / (limit * limit) {
        return Err(Error::NearPlaneSingularity { z: horiz.sqrt() });
    }
    let dlon = |d: &Vector3<f64>| (q.z * d.x - q.x * d.z) / horiz;
    let dlat = |d: &Vector3<f64>| d.y / horiz.sqrt();
    let angular = Matrix2::new(dlon(&dq_dx), dlon(&dq_dy), dlat(&dq_dx), dlat(&dq_dy));
    if angular.iter().any(|a| !a.is_finite() || a.abs() > limit) {
        return Err(Error::NearPlaneSingularity { z: horiz.sqrt() });
    }
    let su = geom.width as f64 / (2.0 * PI);
    let sv = -(geom.height as f64) / PI;
    Ok(Matrix2::new(
        su * angular[(0, 0)],
        su * angular[(0, 1)],
        sv * angular[(1, 0)],
        sv * angular[(1, 1)],
    ))
}

/// Plane units spanned by one pixel step at `pt`: the plane displacement whose
/// largest pixel-space image has length one, `1 / sigma_max(J)`.
pub fn plane_units_per_pixel(
    pt: &PlanePoint,
    plane: &MotionPlane,
    geom: FrameGeometry,
) -> Result<f64> {
    let j = zeta_jacobian(pt, plane, geom)?;
    // Largest singular value of a 2x2 matrix in closed form.
    let a = j[(0, 0)];
    let b = j[(0, 1)];
    let c = j[(1, 0)];
    let d = j[(1, 1)];
    let s1 = a * a + b * b + c * c + d * d;
    let det = a * d - b * c;
    let disc = (s1 * s1 - 4.0 * det * det).max(0.0).sqrt();
    let sigma_max = ((s1 + disc) / 2.0).sqrt();
    Ok(1.0 / sigma_max)
}
