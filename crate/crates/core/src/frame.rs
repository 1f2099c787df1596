//! Luma frames and the shared interpolation kernel.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geometry::{FrameGeometry, PixelCoord};

/// A single luma plane in raster order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    geom: FrameGeometry,
    depth: u8,
    data: Vec<u16>,
}

impl Frame {
    pub fn new(geom: FrameGeometry, depth: u8) -> Result<Self> {
        check_depth(depth)?;
        Ok(Self {
            geom,
            depth,
            data: vec![0; geom.pixel_count()],
        })
    }

    pub fn from_samples(geom: FrameGeometry, depth: u8, data: Vec<u16>) -> Result<Self> {
        check_depth(depth)?;
        if data.len() != geom.pixel_count() {
            return Err(Error::GeometryMismatch(format!(
                "{} samples for a {}x{} frame",
                data.len(),
                geom.width(),
                geom.height()
            )));
        }
        let max = (1u32 << depth) - 1;
        if let Some(bad) = data.iter().find(|&&s| s as u32 > max) {
            return Err(Error::InvalidConfig(format!(
                "sample {bad} exceeds {depth}-bit range"
            )));
        }
        Ok(Self { geom, depth, data })
    }

    /// Builds a frame by evaluating `f(u, v)` at every pixel; values are
    /// rounded and clipped to the sample range.
    pub fn from_fn(geom: FrameGeometry, depth: u8, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_depth(depth)?;
        let max = ((1u32 << depth) - 1) as f64;
        let mut data = Vec::with_capacity(geom.pixel_count());
        for v in 0..geom.height() {
            for u in 0..geom.width() {
                data.push(f(u, v).round().clamp(0.0, max) as u16);
            }
        }
        Ok(Self { geom, depth, data })
    }

    #[inline]
    pub fn geometry(&self) -> FrameGeometry {
        self.geom
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.geom.width()
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.geom.height()
    }

    #[inline]
    pub fn depth(&self) -> u8 {
        self.depth
    }

    #[inline]
    pub fn max_value(&self) -> u16 {
        ((1u32 << self.depth) - 1) as u16
    }

    #[inline]
    pub fn samples(&self) -> &[u16] {
        &self.data
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.geom.width() + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: u16) {
        let w = self.geom.width();
        self.data[v * w + u] = value;
    }

    pub fn row(&self, v: usize) -> &[u16] {
        let w = self.geom.width();
        &self.data[v * w..(v + 1) * w]
    }

    /// Sample at integer coordinates with horizontal wrap and vertical clamp.
    #[inline]
    pub fn get_wrapped(&self, u: i64, v: i64) -> u16 {
        let w = self.geom.width() as i64;
        let h = self.geom.height() as i64;
        let u = u.rem_euclid(w) as usize;
        let v = v.clamp(0, h - 1) as usize;
        self.get(u, v)
    }

    /// Bilinear interpolation at a continuous position.
    #[inline]
    pub fn sample(&self, px: PixelCoord) -> f64 {
        sample_bilinear(self, px)
    }

    pub fn check_same_layout(&self, other: &Frame) -> Result<()> {
        if self.geom != other.geom || self.depth != other.depth {
            return Err(Error::GeometryMismatch(format!(
                "{}x{}@{} vs {}x{}@{}",
                self.width(),
                self.height(),
                self.depth,
                other.width(),
                other.height(),
                other.depth
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&s| s as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Writes a binary PGM. 10-bit frames are stored as 16-bit big-endian
    /// samples with `maxval = 1023`.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "P5\n{} {}\n{}\n", self.width(), self.height(), self.max_value())?;
        if self.depth == 8 {
            let bytes: Vec<u8> = self.data.iter().map(|&s| s as u8).collect();
            out.write_all(&bytes)?;
        } else {
            let mut bytes = Vec::with_capacity(self.data.len() * 2);
            for &s in &self.data {
                bytes.extend_from_slice(&s.to_be_bytes());
            }
            out.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn read_pgm<R: BufRead>(mut input: R) -> Result<Self> {
        let mut tokens = Vec::with_capacity(4);
        let mut line = String::new();
        while tokens.len() < 4 {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::MalformedSequence("truncated PGM header".into()));
            }
            let content = line.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(str::to_owned));
        }
        if tokens[0] != "P5" {
            return Err(Error::MalformedSequence("not a binary PGM".into()));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::MalformedSequence(format!("bad PGM header field {s:?}")))
        };
        let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
        let geom = FrameGeometry::new(w, h)?;
        let depth = match maxval {
            255 => 8,
            1023 => 10,
            _ => return Err(Error::MalformedSequence(format!("unsupported maxval {maxval}"))),
        };
        let bps = if depth == 8 { 1 } else { 2 };
        let mut bytes = vec![0u8; geom.pixel_count() * bps];
        input.read_exact(&mut bytes)?;
        let data = if depth == 8 {
            bytes.into_iter().map(u16::from).collect()
        } else {
            bytes
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        Frame::from_samples(geom, depth, data)
    }
}

fn check_depth(depth: u8) -> Result<()> {
    if depth == 8 || depth == 10 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("unsupported bit depth {depth}")))
    }
}

/// Bilinear blend of the four neighbours; columns wrap, rows clamp. Exact at
/// integer positions.
#[inline]
pub fn sample_bilinear(frame: &Frame, px: PixelCoord) -> f64 {
    let w = frame.width();
    let h = frame.height();
    let u = px.u.rem_euclid(w as f64);
    let v = px.v.clamp(0.0, (h - 1) as f64);
    let u0f = u.floor();
    let v0f = v.floor();
    let fu = u - u0f;
    let fv = v - v0f;
    let u0 = (u0f as usize).min(w - 1);
    let u1 = if u0 + 1 == w { 0 } else { u0 + 1 };
    let v0 = v0f as usize;
    let v1 = (v0 + 1).min(h - 1);
    let data = frame.samples();
    let s00 = data[v0 * w + u0] as f64;
    let s01 = data[v0 * w + u1] as f64;
    let s10 = data[v1 * w + u0] as f64;
    let s11 = data[v1 * w + u1] as f64;
    let top = s00 + fu * (s01 - s00);
    let bottom = s10 + fu * (s11 - s10);
    top + fv * (bottom - top)
}
