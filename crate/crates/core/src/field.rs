//! Per-block motion fields, their fixed-point quantization and the `MPAF`
//! serialization.
//!
//! Layout of an `MPAF` file (all integers little-endian):
//!
//! ```text
//! "MPAF"  u8 version  u32 width  u32 height  u16 block_size
//! per block, row-major:
//!   u8 plane      0 front-back, 1 left-right, 2 top-bottom, 3 none (ERP)
//!   u8 model      0 translation, 1 six-parameter, 2 four-parameter
//!   u8 hemisphere 1 front, 0xff back, 0 for ERP motion
//!   i32 x n       fixed-point parameters (n = 2, 6 or 4)
//! ```
//!
//! Fixed-point steps: linear terms `a, b, c, d` use `2^-11`; affine
//! translations `e, f` use `2^-7` pixel equivalents; plain translations use
//! `1/8` pixel equivalents. A pixel equivalent on a plane is the local
//! plane-units-per-pixel scale at the block center, so the decoder can
//! recompute it from the block position alone.

use std::io::Read;

use crate::compensation::{check_block_size, BlockSpec};
use crate::error::{Error, Result};
use crate::geometry::{
    plane_units_per_pixel, zeta_in, FrameGeometry, Hemisphere, MotionPlane, PlaneId,
};
use crate::motion::{AffineModel, AffineParams, BlockMotion, PlaneModel, PlaneMotion, TranslationVector};

pub const FIELD_MAGIC: &[u8; 4] = b"MPAF";
pub const FIELD_VERSION: u8 = 1;

pub const LINEAR_STEP: f64 = 1.0 / 2048.0;
pub const AFFINE_SHIFT_STEP_PX: f64 = 1.0 / 128.0;
pub const TRANSLATION_STEP_PX: f64 = 1.0 / 8.0;

const PLANE_NONE: u8 = 3;
const MODEL_TRANSLATION: u8 = 0;
const MODEL_SIX: u8 = 1;
const MODEL_FOUR: u8 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct MotionField {
    geom: FrameGeometry,
    block_size: usize,
    motions: Vec<BlockMotion>,
}

impl MotionField {
    pub fn new(geom: FrameGeometry, block_size: usize, motions: Vec<BlockMotion>) -> Result<Self> {
        check_block_size(geom, block_size)?;
        let expected = (geom.width() / block_size) * (geom.height() / block_size);
        if motions.len() != expected {
            return Err(Error::IncompleteGrid(format!(
                "{} motions for {expected} blocks",
                motions.len()
            )));
        }
        Ok(Self {
            geom,
            block_size,
            motions,
        })
    }

    pub fn from_fn(
        geom: FrameGeometry,
        block_size: usize,
        f: impl FnMut(&BlockSpec) -> BlockMotion,
    ) -> Result<Self> {
        let motions = BlockSpec::grid(geom, block_size)?.iter().map(f).collect();
        Self::new(geom, block_size, motions)
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.geom
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn cols(&self) -> usize {
        self.geom.width() / self.block_size
    }

    pub fn rows(&self) -> usize {
        self.geom.height() / self.block_size
    }

    pub fn motions(&self) -> &[BlockMotion] {
        &self.motions
    }

    pub fn block_specs(&self) -> Vec<BlockSpec> {
        BlockSpec::grid(self.geom, self.block_size).expect("validated at construction")
    }

    pub fn block_index(&self, b: BlockSpec) -> Option<usize> {
        if b.size != self.block_size || b.u0 % b.size != 0 || b.v0 % b.size != 0 {
            return None;
        }
        let idx = (b.v0 / b.size) * self.cols() + b.u0 / b.size;
        (idx < self.motions.len()).then_some(idx)
    }

    pub fn iter(&self) -> impl Iterator<Item = (BlockSpec, &BlockMotion)> {
        self.block_specs().into_iter().zip(self.motions.iter())
    }

    /// The field as the decoder sees it after fixed-point quantization.
    pub fn quantized(&self) -> MotionField {
        let motions = self
            .iter()
            .map(|(b, m)| dequantize_motion(b, &quantize_motion(self.geom, b, m), self.geom))
            .collect();
        MotionField {
            geom: self.geom,
            block_size: self.block_size,
            motions,
        }
    }

    /// Serializes the quantized field in the `MPAF` layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.motions.len() * 15);
        out.extend_from_slice(FIELD_MAGIC);
        out.push(FIELD_VERSION);
        out.extend_from_slice(&(self.geom.width() as u32).to_le_bytes());
        out.extend_from_slice(&(self.geom.height() as u32).to_le_bytes());
        out.extend_from_slice(&(self.block_size as u16).to_le_bytes());
        for (b, m) in self.iter() {
            let q = quantize_motion(self.geom, b, m);
            out.extend_from_slice(&[q.plane, q.model, q.hemisphere]);
            for v in &q.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses an `MPAF` byte stream into the dequantized field.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != FIELD_MAGIC {
            return Err(Error::MalformedSequence("bad motion field magic".into()));
        }
        let version = read_u8(&mut r)?;
        if version != FIELD_VERSION {
            return Err(Error::MalformedSequence(format!("unsupported motion field version {version}")));
        }
        let width = read_u32(&mut r)? as usize;
        let height = read_u32(&mut r)? as usize;
        let block_size = read_u16(&mut r)? as usize;
        let geom = FrameGeometry::new(width, height)?;
        let specs = BlockSpec::grid(geom, block_size)?;
        let mut motions = Vec::with_capacity(specs.len());
        for b in specs {
            let plane = read_u8(&mut r)?;
            let model = read_u8(&mut r)?;
            let hemisphere = read_u8(&mut r)?;
            let n = match model {
                MODEL_TRANSLATION => 2,
                MODEL_SIX => 6,
                MODEL_FOUR => 4,
                _ => return Err(Error::MalformedSequence(format!("unknown model kind {model}"))),
            };
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(read_i32(&mut r)?);
            }
            let q = QuantizedMotion {
                plane,
                model,
                hemisphere,
                values,
            };
            validate(&q)?;
            motions.push(dequantize_motion(b, &q, geom));
        }
        if !r.is_empty() {
            return Err(Error::MalformedSequence("trailing bytes after motion field".into()));
        }
        MotionField::new(geom, block_size, motions)
    }
}

/// Integer representation of one block's motion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedMotion {
    pub plane: u8,
    pub model: u8,
    pub hemisphere: u8,
    pub values: Vec<i32>,
}

fn validate(q: &QuantizedMotion) -> Result<()> {
    let ok = if q.plane == PLANE_NONE {
        q.model == MODEL_TRANSLATION && q.hemisphere == 0
    } else {
        PlaneId::from_u8(q.plane).is_some() && Hemisphere::from_byte(q.hemisphere).is_some()
    };
    if ok {
        Ok(())
    } else {
        Err(Error::MalformedSequence(format!(
            "invalid block header ({}, {}, {})",
            q.plane, q.model, q.hemisphere
        )))
    }
}

/// Plane units per pixel at the block center. Falls back to the value at the
/// plane origin of an equatorial block when the center is not representable.
pub fn block_pixel_scale(geom: FrameGeometry, block: BlockSpec, plane: PlaneId, hemisphere: Hemisphere) -> f64 {
    let mp = MotionPlane::new(plane);
    zeta_in(block.center(), &mp, hemisphere, geom)
        .and_then(|pt| plane_units_per_pixel(&pt, &mp, geom))
        .unwrap_or(2.0 * std::f64::consts::PI / geom.width() as f64)
}

fn clamp_round(x: f64) -> i32 {
    x.round().clamp(i32::MIN as f64, i32::MAX as f64) as i32
}

pub fn quantize_motion(geom: FrameGeometry, block: BlockSpec, motion: &BlockMotion) -> QuantizedMotion {
    match motion {
        BlockMotion::Erp(t) => QuantizedMotion {
            plane: PLANE_NONE,
            model: MODEL_TRANSLATION,
            hemisphere: 0,
            values: vec![
                clamp_round(t.x / TRANSLATION_STEP_PX),
                clamp_round(t.y / TRANSLATION_STEP_PX),
            ],
        },
        BlockMotion::Plane(pm) => {
            let scale = block_pixel_scale(geom, block, pm.plane, pm.hemisphere);
            let (model, values) = match &pm.model {
                PlaneModel::Translation(t) => {
                    let step = scale * TRANSLATION_STEP_PX;
                    (MODEL_TRANSLATION, vec![clamp_round(t.x / step), clamp_round(t.y / step)])
                }
                PlaneModel::Affine(p) => quantize_affine(geom, block, pm, p, scale),
            };
            QuantizedMotion {
                plane: pm.plane as u8,
                model,
                hemisphere: pm.hemisphere.to_byte(),
                values,
            }
        }
    }
}

/// Quantizes the linear part first, then re-fits the translation so that the
/// block center keeps its original destination before quantizing it.
fn quantize_affine(
    geom: FrameGeometry,
    block: BlockSpec,
    pm: &PlaneMotion,
    p: &AffineParams,
    scale: f64,
) -> (u8, Vec<i32>) {
    let mp = MotionPlane::new(pm.plane);
    let center = zeta_in(block.center(), &mp, pm.hemisphere, geom)
        .map(|c| (c.x, c.y))
        .unwrap_or((0.0, 0.0));
    let shift_step = scale * AFFINE_SHIFT_STEP_PX;
    let q = |x: f64| clamp_round(x / LINEAR_STEP);
    let deq = |n: i32| n as f64 * LINEAR_STEP;
    match *p {
        AffineParams::Six([a, b, c, d, e, f]) => {
            let (qa, qb, qc, qd) = (q(a), q(b), q(c), q(d));
            let (da, db, dc, dd) = (a - deq(qa), b - deq(qb), c - deq(qc), d - deq(qd));
            let e2 = e + da * center.0 + db * center.1;
            let f2 = f + dc * center.0 + dd * center.1;
            (
                MODEL_SIX,
                vec![qa, qb, qc, qd, clamp_round(e2 / shift_step), clamp_round(f2 / shift_step)],
            )
        }
        AffineParams::Four([a, b, e, f]) => {
            let (qa, qb) = (q(a), q(b));
            let (da, db) = (a - deq(qa), b - deq(qb));
            let e2 = e + da * center.0 + db * center.1;
            let f2 = f - db * center.0 + da * center.1;
            (
                MODEL_FOUR,
                vec![qa, qb, clamp_round(e2 / shift_step), clamp_round(f2 / shift_step)],
            )
        }
    }
}

pub fn dequantize_motion(block: BlockSpec, q: &QuantizedMotion, geom: FrameGeometry) -> BlockMotion {
    let Some(plane) = PlaneId::from_u8(q.plane) else {
        return BlockMotion::Erp(TranslationVector::new(
            q.values[0] as f64 * TRANSLATION_STEP_PX,
            q.values[1] as f64 * TRANSLATION_STEP_PX,
        ));
    };
    let hemisphere = Hemisphere::from_byte(q.hemisphere).unwrap_or(Hemisphere::Front);
    let scale = block_pixel_scale(geom, block, plane, hemisphere);
    let lin = |n: i32| n as f64 * LINEAR_STEP;
    let shift = |n: i32| n as f64 * scale * AFFINE_SHIFT_STEP_PX;
    let model = match q.model {
        MODEL_TRANSLATION => {
            let step = scale * TRANSLATION_STEP_PX;
            PlaneModel::Translation(TranslationVector::new(
                q.values[0] as f64 * step,
                q.values[1] as f64 * step,
            ))
        }
        MODEL_SIX => {
            let v = &q.values;
            PlaneModel::Affine(AffineParams::Six([
                lin(v[0]),
                lin(v[1]),
                lin(v[2]),
                lin(v[3]),
                shift(v[4]),
                shift(v[5]),
            ]))
        }
        _ => {
            let v = &q.values;
            PlaneModel::Affine(AffineParams::Four([lin(v[0]), lin(v[1]), shift(v[2]), shift(v[3])]))
        }
    };
    BlockMotion::Plane(PlaneMotion {
        plane,
        hemisphere,
        model,
    })
}

/// Counts how many parameters the field carries in total.
pub fn parameter_count(field: &MotionField) -> usize {
    field
        .motions()
        .iter()
        .map(|m| match m {
            BlockMotion::Erp(_) => 2,
            BlockMotion::Plane(pm) => match &pm.model {
                PlaneModel::Translation(_) => 2,
                PlaneModel::Affine(p) => p.model().n_params(),
            },
        })
        .sum()
}

/// Model used by the affine blocks of a field, if any.
pub fn affine_model(field: &MotionField) -> Option<AffineModel> {
    field.motions().iter().find_map(|m| match m {
        BlockMotion::Plane(PlaneMotion {
            model: PlaneModel::Affine(p),
            ..
        }) => Some(p.model()),
        _ => None,
    })
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::MalformedSequence("motion field truncated".into()))
}

fn read_u8(r: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u16(r: &mut &[u8]) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_i32(r: &mut &[u8]) -> Result<i32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(i32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixed_field() -> MotionField {
        let g = FrameGeometry::new(256, 128).unwrap();
        MotionField::from_fn(g, 32, |b| match (b.u0 / 32 + b.v0 / 32) % 4 {
            0 => BlockMotion::Erp(TranslationVector::new(1.3, -0.71)),
            1 => BlockMotion::plane_translation(
                PlaneId::LeftRight,
                Hemisphere::Back,
                TranslationVector::new(0.0123, -0.004),
            ),
            2 => BlockMotion::plane_affine(
                PlaneId::FrontBack,
                Hemisphere::Front,
                AffineParams::Six([0.021, -0.013, 0.004, 0.032, 0.011, -0.02]),
            ),
            _ => BlockMotion::plane_affine(
                PlaneId::TopBottom,
                Hemisphere::Front,
                AffineParams::Four([-0.017, 0.009, 0.05, 0.003]),
            ),
        })
        .unwrap()
    }

    #[test]
    fn bytes_round_trip_to_quantized_field() {
        let f = mixed_field();
        let bytes = f.to_bytes();
        assert!(bytes.starts_with(b"MPAF\x01"));
        let back = MotionField::from_bytes(&bytes).unwrap();
        assert_eq!(back, f.quantized());
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn quantization_is_idempotent() {
        let q = mixed_field().quantized();
        assert_eq!(q.quantized(), q);
    }

    #[test]
    fn erp_translation_on_eighth_pel_grid() {
        let g = FrameGeometry::new(64, 32).unwrap();
        let b = BlockSpec::new(0, 0, 16);
        let q = quantize_motion(g, b, &BlockMotion::Erp(TranslationVector::new(1.3, -0.71)));
        assert_eq!(q.values, vec![10, -6]);
    }

    #[test]
    fn recentred_affine_keeps_block_center() {
        let g = FrameGeometry::new(768, 384).unwrap();
        let b = BlockSpec::new(480, 96, 32);
        let m = BlockMotion::plane_affine(
            PlaneId::FrontBack,
            Hemisphere::Front,
            AffineParams::Six([0.0231, -0.0117, 0.0043, 0.0321, 0.011, -0.02]),
        );
        let q = dequantize_motion(b, &quantize_motion(g, b, &m), g);
        let c = b.center();
        let a = crate::motion::mpa_warp(c, &m, g).unwrap();
        let z = crate::motion::mpa_warp(c, &q, g).unwrap();
        // Within a fixed-point translation step (1/16 px) of the original.
        assert!((a.u - z.u).abs() < 0.07 && (a.v - z.v).abs() < 0.07, "{a:?} {z:?}");
    }

    #[test]
    fn rejects_corrupt_streams() {
        let bytes = mixed_field().to_bytes();
        assert!(MotionField::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(MotionField::from_bytes(&bad).is_err());
        let mut bad = bytes.clone();
        bad.push(0);
        assert!(MotionField::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[15] = 9; // first block plane id
        assert!(MotionField::from_bytes(&bad).is_err());
    }

    #[test]
    fn field_requires_complete_grid() {
        let g = FrameGeometry::new(64, 32).unwrap();
        assert!(MotionField::new(g, 16, vec![BlockMotion::Erp(TranslationVector::ZERO); 7]).is_err());
        assert!(MotionField::new(g, 16, vec![BlockMotion::Erp(TranslationVector::ZERO); 8]).is_ok());
    }
}
