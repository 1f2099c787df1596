//! PSNR, WS-PSNR and Bjøntegaard-delta rate.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;

/// PSNR in dB. Identical frames give `f64::INFINITY`.
pub fn psnr(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_layout(b)?;
    let sse: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(db(a.max_value(), sse / a.samples().len() as f64))
}

/// Latitude weight of row `v` in an equirectangular frame of height `h`.
#[inline]
pub fn ws_weight(v: usize, h: usize) -> f64 {
    ((v as f64 + 0.5 - h as f64 / 2.0) * std::f64::consts::PI / h as f64).cos()
}

/// WS-PSNR in dB: squared errors weighted by [`ws_weight`] per row.
pub fn ws_psnr(a: &Frame, b: &Frame) -> Result<f64> {
    a.check_same_layout(b)?;
    let (w, h) = (a.width(), a.height());
    let mut num = 0.0;
    let mut den = 0.0;
    for v in 0..h {
        let wt = ws_weight(v, h);
        let row_sse: f64 = a
            .row(v)
            .iter()
            .zip(b.row(v))
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum();
        num += wt * row_sse;
        den += wt * w as f64;
    }
    Ok(db(a.max_value(), num / den))
}

fn db(max: u16, mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * ((max as f64).powi(2) / mse).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// Bits per pixel.
    pub rate: f64,
    /// WS-PSNR in dB.
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Self {
        Self { rate, quality }
    }
}

/// A rate-distortion curve, stored in increasing rate order.
#[derive(Clone, Debug, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub const MIN_POINTS: usize = 4;

    /// Sorts by rate. Fails on fewer than four points, non-positive or
    /// repeated rates and non-finite qualities.
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < Self::MIN_POINTS {
            return Err(Error::InvalidCurve(format!("{} points, need at least 4", points.len())));
        }
        if let Some(p) = points.iter().find(|p| !(p.rate > 0.0) || !p.rate.is_finite() || !p.quality.is_finite()) {
            return Err(Error::InvalidCurve(format!("invalid point {p:?}")));
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        if points.windows(2).any(|w| w[0].rate == w[1].rate) {
            return Err(Error::InvalidCurve("repeated rate".into()));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    /// Whether quality never drops as the rate grows.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[1].quality >= w[0].quality)
    }

    pub fn quality_range(&self) -> (f64, f64) {
        self.points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.quality), hi.max(p.quality)))
    }
}

/// Least-squares cubic `ln(rate) = c0 + c1 q + c2 q^2 + c3 q^3`, solved with
/// the quality axis centered and scaled for conditioning.
struct LogRateFit {
    coeffs: [f64; 4],
    center: f64,
    scale: f64,
}

impl LogRateFit {
    fn new(curve: &RdCurve, center: f64, scale: f64) -> Result<Self> {
        let pts = curve.points();
        let x = DMatrix::from_fn(pts.len(), 4, |i, j| ((pts[i].quality - center) / scale).powi(j as i32));
        let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.rate.ln()));
        let sol = x
            .svd(true, true)
            .solve(&y, 1e-12)
            .map_err(|e| Error::InvalidCurve(e.to_string()))?;
        Ok(Self {
            coeffs: [sol[0], sol[1], sol[2], sol[3]],
            center,
            scale,
        })
    }

    /// Integral of the fit over `[lo, hi]` in quality units.
    fn integral(&self, lo: f64, hi: f64) -> f64 {
        let prim = |q: f64| {
            let t = (q - self.center) / self.scale;
            self.coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * t.powi(k as i32 + 1) / (k as f64 + 1.0))
                .sum::<f64>()
                * self.scale
        };
        prim(hi) - prim(lo)
    }
}

/// Average rate difference of `test` against `anchor` in percent at equal
/// quality. Negative values are savings.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<f64> {
    let (alo, ahi) = anchor.quality_range();
    let (tlo, thi) = test.quality_range();
    let lo = alo.max(tlo);
    let hi = ahi.min(thi);
    if !(hi > lo) {
        return Err(Error::NoOverlap);
    }
    let center = 0.5 * (lo + hi);
    let scale = 0.5 * (hi - lo);
    let fa = LogRateFit::new(anchor, center, scale)?;
    let ft = LogRateFit::new(test, center, scale)?;
    let avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);
    Ok((avg.exp() - 1.0) * 100.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRecord {
    label: String,
    rate_bpp: f64,
    ws_psnr_db: f64,
}

/// Writes labelled points as `label,rate_bpp,ws_psnr_db` CSV with a header.
pub fn write_rd_csv<W: Write>(out: W, rows: &[(String, RdPoint)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (label, p) in rows {
        w.serialize(CurveRecord {
            label: label.clone(),
            rate_bpp: p.rate,
            ws_psnr_db: p.quality,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads labelled points, grouped by label in order of first appearance.
pub fn read_rd_csv<R: Read>(input: R) -> Result<Vec<(String, Vec<RdPoint>)>> {
    let mut groups: Vec<(String, Vec<RdPoint>)> = Vec::new();
    for rec in csv::Reader::from_reader(input).deserialize() {
        let rec: CurveRecord = rec?;
        let p = RdPoint::new(rec.rate_bpp, rec.ws_psnr_db);
        match groups.iter_mut().find(|(l, _)| *l == rec.label) {
            Some((_, pts)) => pts.push(p),
            None => groups.push((rec.label, vec![p])),
        }
    }
    Ok(groups)
}
