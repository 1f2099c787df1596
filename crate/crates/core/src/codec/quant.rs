//! Scalar quantization with a frequency-weighted 8x8 matrix.

use crate::codec::dct::Block8;
use crate::error::{Error, Result};

/// Row-major index of the `k`-th coefficient in zigzag order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// The customary luminance table of baseline JPEG, row-major.
const JPEG_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Default base matrix: the JPEG luminance table with each entry raised to the
/// running maximum along the zigzag scan, so step sizes never decrease with
/// frequency.
pub fn default_matrix() -> [u16; 64] {
    let mut m = JPEG_LUMA;
    let mut running = 0;
    for &i in &ZIGZAG {
        running = running.max(m[i]);
        m[i] = running;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantConfig {
    /// Row-major base step sizes.
    pub matrix: [u16; 64],
    /// Multiplier applied to every entry of `matrix`.
    pub qp_scale: f64,
}

impl QuantConfig {
    pub fn new(qp_scale: f64) -> Result<Self> {
        let cfg = Self {
            matrix: default_matrix(),
            qp_scale,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.qp_scale > 0.0) || !self.qp_scale.is_finite() {
            return Err(Error::InvalidConfig(format!("qp scale {} must be positive", self.qp_scale)));
        }
        if self.matrix.contains(&0) {
            return Err(Error::InvalidConfig("quantization matrix entries must be at least 1".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self, i: usize) -> f64 {
        self.qp_scale * self.matrix[i] as f64
    }
}

/// Row-major levels; ties round away from zero.
pub fn quantize(coeffs: &Block8, cfg: &QuantConfig) -> [i64; 64] {
    let mut out = [0; 64];
    for (i, l) in out.iter_mut().enumerate() {
        *l = (coeffs[i / 8][i % 8] / cfg.step(i)).round() as i64;
    }
    out
}

pub fn dequantize(levels: &[i64; 64], cfg: &QuantConfig) -> Block8 {
    let mut out = [[0.0; 8]; 8];
    for (i, &l) in levels.iter().enumerate() {
        out[i / 8][i % 8] = l as f64 * cfg.step(i);
    }
    out
}
