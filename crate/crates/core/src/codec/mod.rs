//! Residual codec used to measure rate: 8x8 DCT, scalar quantization,
//! zigzag run-levels with a per-frame canonical Huffman code, and
//! bzip2-compressed motion parameters.
//!
//! The reference frame is assumed to be available losslessly at the decoder.
//! Layout of an `MPAC` stream (integers little-endian):
//!
//! ```text
//! "MPAC"  u8 version  u32 width  u32 height  u8 depth  u16 block_size
//! u8 mode  f64 qp_scale  u8 matrix_kind (0 default, 1 custom + 64 x u16)
//! u32 motion_len  motion_len bytes of bzip2-compressed MPAF field
//! u16 table_len  table_len x (u16 symbol, u8 code length)
//! u32 residual_len  residual_len bytes of coded blocks
//! ```

pub mod dct;
pub mod entropy;
pub mod quant;

use std::io::{Read, Write};

use rayon::prelude::*;

pub use dct::{dct8_forward, dct8_inverse, Block8};
pub use entropy::{decode_blocks, encode_blocks, runlevel_to_levels, zigzag_runlevel, HuffmanCode, RunLevel};
pub use quant::{default_matrix, dequantize, quantize, QuantConfig, ZIGZAG};

use crate::compensation::compensate_frame;
use crate::error::{Error, Result};
use crate::estimation::{estimate_frame, EstimatorConfig, Mode};
use crate::field::MotionField;
use crate::frame::Frame;
use crate::geometry::FrameGeometry;
use crate::metrics::{psnr, ws_psnr, RdCurve, RdPoint};

pub const STREAM_MAGIC: &[u8; 4] = b"MPAC";
pub const STREAM_VERSION: u8 = 1;
pub const TRANSFORM_SIZE: usize = 8;
/// Default QP multipliers of a rate sweep.
pub const DEFAULT_QP_LIST: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

/// Losslessly compresses the quantized motion field.
pub fn encode_motion_params(field: &MotionField) -> Result<Vec<u8>> {
    let mut enc = bzip2::write::BzEncoder::new(Vec::new(), bzip2::Compression::best());
    enc.write_all(&field.to_bytes())?;
    Ok(enc.finish()?)
}

/// Restores the quantized field written by [`encode_motion_params`].
pub fn decode_motion_params(bytes: &[u8]) -> Result<MotionField> {
    let mut raw = Vec::new();
    bzip2::read::BzDecoder::new(bytes)
        .read_to_end(&mut raw)
        .map_err(|e| Error::MalformedSequence(format!("motion segment: {e}")))?;
    MotionField::from_bytes(&raw)
}

/// Size of each part of a coded frame in bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RateBreakdown {
    pub header: u64,
    pub motion: u64,
    pub table: u64,
    pub residual: u64,
}

impl RateBreakdown {
    pub fn total(&self) -> u64 {
        self.header + self.motion + self.table + self.residual
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bitstream {
    pub geometry: FrameGeometry,
    pub depth: u8,
    pub block_size: usize,
    pub mode: Mode,
    pub quant: QuantConfig,
    pub motion: Vec<u8>,
    pub code: HuffmanCode,
    pub residual: Vec<u8>,
}

impl Bitstream {
    fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(160);
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.extend_from_slice(&(self.geometry.width() as u32).to_le_bytes());
        out.extend_from_slice(&(self.geometry.height() as u32).to_le_bytes());
        out.push(self.depth);
        out.extend_from_slice(&(self.block_size as u16).to_le_bytes());
        out.push(self.mode.to_byte());
        out.extend_from_slice(&self.quant.qp_scale.to_le_bytes());
        if self.quant.matrix == default_matrix() {
            out.push(0);
        } else {
            out.push(1);
            for q in self.quant.matrix {
                out.extend_from_slice(&q.to_le_bytes());
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&(self.motion.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.motion);
        out.extend_from_slice(&self.code.to_bytes());
        out.extend_from_slice(&(self.residual.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.residual);
        out
    }

    /// Bit counts per section; they add up to `8 * to_bytes().len()`.
    pub fn rate(&self) -> RateBreakdown {
        RateBreakdown {
            header: 8 * self.header_bytes().len() as u64,
            motion: 8 * (4 + self.motion.len()) as u64,
            table: 8 * self.code.to_bytes().len() as u64,
            residual: 8 * (4 + self.residual.len()) as u64,
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader(bytes);
        if r.take(4)? != STREAM_MAGIC {
            return Err(Error::MalformedSequence("bad stream magic".into()));
        }
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(Error::MalformedSequence(format!("unsupported stream version {version}")));
        }
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let geometry = FrameGeometry::new(width, height)?;
        let depth = r.u8()?;
        let block_size = r.u16()? as usize;
        let mode = Mode::from_byte(r.u8()?).ok_or_else(|| Error::MalformedSequence("unknown mode".into()))?;
        let qp_scale = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let matrix = match r.u8()? {
            0 => default_matrix(),
            1 => {
                let mut m = [0u16; 64];
                for q in m.iter_mut() {
                    *q = r.u16()?;
                }
                m
            }
            k => return Err(Error::MalformedSequence(format!("unknown matrix kind {k}"))),
        };
        let quant = QuantConfig { matrix, qp_scale };
        quant.validate().map_err(|e| Error::MalformedSequence(e.to_string()))?;
        let motion_len = r.u32()? as usize;
        let motion = r.take(motion_len)?.to_vec();
        let (code, used) = HuffmanCode::from_bytes(r.0)?;
        r.take(used)?;
        let residual_len = r.u32()? as usize;
        let residual = r.take(residual_len)?.to_vec();
        if !r.0.is_empty() {
            return Err(Error::MalformedSequence("trailing bytes after stream".into()));
        }
        Ok(Self {
            geometry,
            depth,
            block_size,
            mode,
            quant,
            motion,
            code,
            residual,
        })
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(Error::MalformedSequence("stream ends early".into()));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn check_transform_grid(geom: FrameGeometry) -> Result<()> {
    if geom.width() % TRANSFORM_SIZE != 0 || geom.height() % TRANSFORM_SIZE != 0 {
        return Err(Error::InvalidGeometry {
            width: geom.width(),
            height: geom.height(),
            reason: "dimensions must be multiples of 8 for the transform",
        });
    }
    Ok(())
}

/// Origins of the 8x8 transform blocks in raster order.
fn transform_blocks(geom: FrameGeometry) -> Vec<(usize, usize)> {
    let (cols, rows) = (geom.width() / TRANSFORM_SIZE, geom.height() / TRANSFORM_SIZE);
    (0..rows * cols)
        .map(|k| ((k % cols) * TRANSFORM_SIZE, (k / cols) * TRANSFORM_SIZE))
        .collect()
}

/// Adds the decoded residual of every transform block to the prediction.
fn reconstruct(prediction: &Frame, levels: &[[i64; 64]], quant: &QuantConfig) -> Frame {
    let geom = prediction.geometry();
    let max = prediction.max_value() as f64;
    let blocks = transform_blocks(geom);
    let decoded: Vec<Block8> = levels.par_iter().map(|l| dct8_inverse(&dequantize(l, quant))).collect();
    let mut out = prediction.clone();
    for (&(u0, v0), res) in blocks.iter().zip(&decoded) {
        for (dv, row) in res.iter().enumerate() {
            for (du, r) in row.iter().enumerate() {
                let (u, v) = (u0 + du, v0 + dv);
                let s = (prediction.get(u, v) as f64 + r.round()).clamp(0.0, max);
                out.set(u, v, s as u16);
            }
        }
    }
    out
}

/// Result of coding one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedFrame {
    pub bitstream: Bitstream,
    /// What the decoder will output.
    pub reconstruction: Frame,
    /// Prediction from the quantized motion field.
    pub prediction: Frame,
}

/// Codes `template` against the prediction from `reference` and the
/// quantized version of `field`.
pub fn encode_frame(
    template: &Frame,
    reference: &Frame,
    field: &MotionField,
    mode: Mode,
    quant: &QuantConfig,
) -> Result<EncodedFrame> {
    template.check_same_layout(reference)?;
    quant.validate()?;
    let geom = template.geometry();
    check_transform_grid(geom)?;
    let quantized = field.quantized();
    let prediction = compensate_frame(reference, &quantized)?;
    let levels: Vec<[i64; 64]> = transform_blocks(geom)
        .par_iter()
        .map(|&(u0, v0)| {
            let mut res = [[0.0; 8]; 8];
            for (dv, row) in res.iter_mut().enumerate() {
                for (du, r) in row.iter_mut().enumerate() {
                    let (u, v) = (u0 + du, v0 + dv);
                    *r = template.get(u, v) as f64 - prediction.get(u, v) as f64;
                }
            }
            quantize(&dct8_forward(&res), quant)
        })
        .collect();
    let symbols: Vec<Vec<RunLevel>> = levels.iter().map(zigzag_runlevel).collect();
    let (code, residual) = encode_blocks(&symbols)?;
    let reconstruction = reconstruct(&prediction, &levels, quant);
    let bitstream = Bitstream {
        geometry: geom,
        depth: template.depth(),
        block_size: field.block_size(),
        mode,
        quant: *quant,
        motion: encode_motion_params(field)?,
        code,
        residual,
    };
    Ok(EncodedFrame {
        bitstream,
        reconstruction,
        prediction,
    })
}

pub fn decode_frame(stream: &Bitstream, reference: &Frame) -> Result<Frame> {
    if reference.geometry() != stream.geometry || reference.depth() != stream.depth {
        return Err(Error::GeometryMismatch("reference does not match the stream header".into()));
    }
    check_transform_grid(stream.geometry)?;
    let field = decode_motion_params(&stream.motion)?;
    if field.geometry() != stream.geometry || field.block_size() != stream.block_size {
        return Err(Error::MalformedSequence("motion field does not match the stream header".into()));
    }
    let prediction = compensate_frame(reference, &field)?;
    let n = transform_blocks(stream.geometry).len();
    let levels = decode_blocks(&stream.code, &stream.residual, n)?;
    Ok(reconstruct(&prediction, &levels, &stream.quant))
}

/// One operating point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RdSample {
    pub qp_scale: f64,
    pub bits: RateBreakdown,
    /// Total bits per pixel.
    pub rate_bpp: f64,
    pub psnr: f64,
    pub ws_psnr: f64,
}

impl RdSample {
    pub fn point(&self) -> RdPoint {
        RdPoint::new(self.rate_bpp, self.ws_psnr)
    }
}

/// Codes the frame at every QP of `qp_list` with a fixed motion field.
pub fn rd_points(
    template: &Frame,
    reference: &Frame,
    field: &MotionField,
    mode: Mode,
    matrix: [u16; 64],
    qp_list: &[f64],
) -> Result<Vec<RdSample>> {
    let pixels = template.geometry().pixel_count() as f64;
    qp_list
        .iter()
        .map(|&qp_scale| {
            let quant = QuantConfig { matrix, qp_scale };
            let enc = encode_frame(template, reference, field, mode, &quant)?;
            let bits = enc.bitstream.rate();
            Ok(RdSample {
                qp_scale,
                bits,
                rate_bpp: bits.total() as f64 / pixels,
                psnr: psnr(template, &enc.reconstruction)?,
                ws_psnr: ws_psnr(template, &enc.reconstruction)?,
            })
        })
        .collect()
}

/// Estimates motion with `mode` and block size `block_size`, then sweeps the
/// QPs and returns the rate-distortion curve.
pub fn rd_sweep(
    template: &Frame,
    reference: &Frame,
    mode: Mode,
    block_size: usize,
    qp_list: &[f64],
    cfg: &EstimatorConfig,
) -> Result<RdCurve> {
    let est = estimate_frame(template, reference, mode, block_size, cfg)?;
    let samples = rd_points(template, reference, &est.field, mode, default_matrix(), qp_list)?;
    RdCurve::new(samples.iter().map(RdSample::point).collect())
}
