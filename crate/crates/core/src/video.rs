//! Raw luma ingestion, downscaling, frame-pair planning and synthetic
//! sequences with known motion.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame::{sample_bilinear, Frame};
use crate::geometry::{erp_to_sphere, FrameGeometry, MotionPlane, PixelCoord, PlaneId};
use crate::motion::{AffineMatrix, AffineParams};

/// Sample layout of a raw file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChromaLayout {
    /// Planar Y, U, V with quarter-size chroma planes.
    Yuv420,
    /// Luma only.
    Luma,
}

impl ChromaLayout {
    pub fn as_str(self) -> &'static str {
        match self {
            ChromaLayout::Yuv420 => "yuv420",
            ChromaLayout::Luma => "y",
        }
    }
}

impl FromStr for ChromaLayout {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yuv420" | "420" => Ok(ChromaLayout::Yuv420),
            "y" | "luma" | "gray" => Ok(ChromaLayout::Luma),
            _ => Err(Error::InvalidConfig(format!("unknown chroma layout {s:?}"))),
        }
    }
}

/// Contents of a `<sequence>.meta` sidecar: one `key=value` per line, `#`
/// starts a comment. Keys: `width`, `height`, `depth`, `fps`, `layout`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SequenceMeta {
    pub geometry: FrameGeometry,
    pub depth: u8,
    pub fps: f64,
    pub layout: ChromaLayout,
}

impl SequenceMeta {
    pub fn parse(text: &str) -> Result<Self> {
        let mut width = None;
        let mut height = None;
        let mut depth = 8u8;
        let mut fps = 30.0;
        let mut layout = ChromaLayout::Yuv420;
        let bad = |k: &str, v: &str| Error::MalformedSequence(format!("bad sidecar value {k}={v}"));
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::MalformedSequence(format!("sidecar line without '=': {line}")))?;
            let (k, v) = (k.trim(), v.trim());
            match k {
                "width" => width = Some(v.parse::<usize>().map_err(|_| bad(k, v))?),
                "height" => height = Some(v.parse::<usize>().map_err(|_| bad(k, v))?),
                "depth" => depth = v.parse().map_err(|_| bad(k, v))?,
                "fps" => fps = v.parse().map_err(|_| bad(k, v))?,
                "layout" => layout = v.parse()?,
                _ => {}
            }
        }
        let (Some(w), Some(h)) = (width, height) else {
            return Err(Error::MalformedSequence("sidecar needs width and height".into()));
        };
        if depth != 8 && depth != 10 {
            return Err(Error::MalformedSequence(format!("unsupported depth {depth}")));
        }
        Ok(Self {
            geometry: FrameGeometry::new(w, h)?,
            depth,
            fps,
            layout,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "width={}\nheight={}\ndepth={}\nfps={}\nlayout={}\n",
            self.geometry.width(),
            self.geometry.height(),
            self.depth,
            self.fps,
            self.layout.as_str()
        )
    }

    pub fn sidecar_path(sequence: &Path) -> PathBuf {
        let mut s = sequence.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }
}

/// A raw sequence on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSource {
    pub path: PathBuf,
    pub meta: SequenceMeta,
    pub frame_count: usize,
}

impl SequenceSource {
    /// Opens `path` using its `.meta` sidecar.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(SequenceMeta::sidecar_path(path))?;
        Self::with_meta(path, SequenceMeta::parse(&text)?)
    }

    pub fn with_meta(path: impl AsRef<Path>, meta: SequenceMeta) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let len = fs::metadata(&path)?.len();
        let fb = frame_bytes(&meta) as u64;
        if len % fb != 0 {
            return Err(Error::TruncatedFile {
                expected: (len / fb + 1) * fb,
                found: len,
            });
        }
        Ok(Self {
            path,
            meta,
            frame_count: (len / fb) as usize,
        })
    }

    pub fn geometry(&self) -> FrameGeometry {
        self.meta.geometry
    }

    /// Reads the luma plane of frame `index`.
    pub fn read_luma(&self, index: usize) -> Result<Frame> {
        if index >= self.frame_count {
            return Err(Error::IndexOutOfRange {
                index,
                count: self.frame_count,
            });
        }
        let geom = self.meta.geometry;
        let bps = bytes_per_sample(self.meta.depth);
        let mut buf = vec![0u8; geom.pixel_count() * bps];
        let mut f = File::open(&self.path)?;
        let offset = (index * frame_bytes(&self.meta)) as u64;
        f.seek(SeekFrom::Start(offset))?;
        let mut got = 0;
        while got < buf.len() {
            match f.read(&mut buf[got..])? {
                0 => {
                    return Err(Error::TruncatedFile {
                        expected: offset + buf.len() as u64,
                        found: offset + got as u64,
                    })
                }
                n => got += n,
            }
        }
        let data = if bps == 1 {
            buf.into_iter().map(u16::from).collect()
        } else {
            buf.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect()
        };
        Frame::from_samples(geom, self.meta.depth, data)
            .map_err(|e| Error::MalformedSequence(format!("frame {index}: {e}")))
    }
}

fn bytes_per_sample(depth: u8) -> usize {
    if depth > 8 {
        2
    } else {
        1
    }
}

fn frame_bytes(meta: &SequenceMeta) -> usize {
    let luma = meta.geometry.pixel_count() * bytes_per_sample(meta.depth);
    match meta.layout {
        ChromaLayout::Luma => luma,
        ChromaLayout::Yuv420 => luma + 2 * (luma / 4),
    }
}

/// Writes frames as a raw file plus its sidecar. 4:2:0 output gets flat
/// mid-grey chroma.
pub fn write_sequence(path: impl AsRef<Path>, frames: &[Frame], layout: ChromaLayout, fps: f64) -> Result<SequenceSource> {
    let path = path.as_ref();
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidConfig("no frames to write".into()))?;
    let meta = SequenceMeta {
        geometry: first.geometry(),
        depth: first.depth(),
        fps,
        layout,
    };
    let mut out = BufWriter::new(File::create(path)?);
    let chroma_samples = first.geometry().pixel_count() / 2;
    let mid = 1u16 << (first.depth() - 1);
    for f in frames {
        first.check_same_layout(f)?;
        write_samples(&mut out, f.samples().iter().copied(), f.depth())?;
        if layout == ChromaLayout::Yuv420 {
            write_samples(&mut out, std::iter::repeat_n(mid, chroma_samples), f.depth())?;
        }
    }
    out.flush()?;
    fs::write(SequenceMeta::sidecar_path(path), meta.to_text())?;
    SequenceSource::with_meta(path, meta)
}

fn write_samples<W: Write>(out: &mut W, samples: impl Iterator<Item = u16>, depth: u8) -> Result<()> {
    if depth > 8 {
        for s in samples {
            out.write_all(&s.to_le_bytes())?;
        }
    } else {
        let bytes: Vec<u8> = samples.map(|s| s as u8).collect();
        out.write_all(&bytes)?;
    }
    Ok(())
}

/// Per-axis area-average weights: `(first source index, weights)` for each
/// target index.
fn area_weights(src: usize, dst: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            let w = (first..last)
                .map(|s| ((s + 1) as f64).min(hi) - (s as f64).max(lo))
                .map(|o| o / scale)
                .collect();
            (first, w)
        })
        .collect()
}

/// Area-average resampling to a smaller or equal geometry. Results are
/// rounded half away from zero.
pub fn downscale(frame: &Frame, target: FrameGeometry) -> Result<Frame> {
    let src = frame.geometry();
    if target.width() > src.width() || target.height() > src.height() {
        return Err(Error::InvalidGeometry {
            width: target.width(),
            height: target.height(),
            reason: "downscale target is larger than the source",
        });
    }
    let wx = area_weights(src.width(), target.width());
    let wy = area_weights(src.height(), target.height());
    // Horizontal pass into f64 rows, then vertical.
    let mut rows = vec![0.0; src.height() * target.width()];
    for v in 0..src.height() {
        let line = frame.row(v);
        for (x, (first, w)) in wx.iter().enumerate() {
            rows[v * target.width() + x] = w.iter().enumerate().map(|(k, wk)| wk * line[first + k] as f64).sum();
        }
    }
    Frame::from_fn(target, frame.depth(), |u, v| {
        let (first, w) = &wy[v];
        w.iter().enumerate().map(|(k, wk)| wk * rows[(first + k) * target.width() + u]).sum()
    })
}

/// Template and reference indices of the evaluated frame pairs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FramePairPlan {
    /// `(template, reference)` with `reference = template - 1`.
    pub pairs: Vec<(usize, usize)>,
}

/// Spreads `pairs` templates evenly over `[1, total - 1]`.
pub fn plan_pairs(total: usize, pairs: usize) -> Result<FramePairPlan> {
    if pairs == 0 {
        return Err(Error::InvalidConfig("at least one frame pair is needed".into()));
    }
    if total < pairs + 1 {
        return Err(Error::TooFewFrames {
            needed: pairs + 1,
            available: total,
        });
    }
    let templates = (0..pairs).map(|i| if pairs == 1 { 1 } else { 1 + i * (total - 2) / (pairs - 1) });
    Ok(FramePairPlan {
        pairs: templates.map(|t| (t, t - 1)).collect(),
    })
}

/// Motion applied between consecutive synthetic frames.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SynthKind {
    /// Horizontal shift of the raster by `pixels` per frame.
    Pan { pixels: f64 },
    /// Sphere rotation per frame; angles in radians about the up, right and
    /// front axes.
    RotateSphere { yaw: f64, pitch: f64, roll: f64 },
    /// Isotropic scaling by `1 + zoom` per frame on a motion plane.
    ZoomOnPlane { plane: PlaneId, zoom: f64 },
    /// Affine motion on a motion plane.
    AffineOnPlane { plane: PlaneId, params: AffineParams },
}

impl SynthKind {
    pub fn name(&self) -> &'static str {
        match self {
            SynthKind::Pan { .. } => "pan",
            SynthKind::RotateSphere { .. } => "rotate_sphere",
            SynthKind::ZoomOnPlane { .. } => "zoom_on_plane",
            SynthKind::AffineOnPlane { .. } => "affine_on_plane",
        }
    }

    /// The affine matrix that maps template plane points to reference plane
    /// points for every consecutive pair, for the plane-based kinds.
    pub fn pair_affine(&self) -> Option<(PlaneId, AffineMatrix)> {
        match *self {
            SynthKind::ZoomOnPlane { plane, zoom } => Some((plane, AffineParams::Four([zoom, 0.0, 0.0, 0.0]).matrix())),
            SynthKind::AffineOnPlane { plane, params } => Some((plane, params.matrix())),
            _ => None,
        }
    }

    fn rotation(&self) -> Option<Matrix3<f64>> {
        match *self {
            SynthKind::RotateSphere { yaw, pitch, roll } => {
                let r = Rotation3::from_axis_angle(&Vector3::y_axis(), yaw)
                    * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch)
                    * Rotation3::from_axis_angle(&Vector3::z_axis(), roll);
                Some(*r.matrix())
            }
            _ => None,
        }
    }
}

/// Cumulative motion of one synthetic frame relative to frame 0.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub frame: usize,
    /// Pan: `[shift]`; rotation: the 3x3 matrix row-major; plane kinds: the
    /// 2x3 affine matrix row-major.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub kind: SynthKind,
    pub frames: Vec<Frame>,
    pub truth: Vec<GroundTruth>,
}

impl SyntheticSequence {
    /// Ground truth as CSV: `frame` then the cumulative parameters.
    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.truth.first().map_or(0, |t| t.values.len());
        let mut header = vec!["frame".to_string()];
        header.extend((0..n).map(|k| format!("p{k}")));
        w.write_record(&header)?;
        for t in &self.truth {
            let mut rec = vec![t.frame.to_string()];
            rec.extend(t.values.iter().map(|v| format!("{v:.17e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Smooth sphere texture: random plane waves plus Gaussian spots.
struct SphereTexture {
    waves: Vec<(Vector3<f64>, f64, f64)>,
    spots: Vec<(Vector3<f64>, f64, f64)>,
    norm: f64,
}

impl SphereTexture {
    fn new(rng: &mut ChaCha8Rng, height: usize) -> Self {
        let direction = |rng: &mut ChaCha8Rng| loop {
            let v = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        };
        // Wavelengths between 8 and 40 pixels of the equator.
        let waves: Vec<_> = (0..48)
            .map(|_| {
                let wavelength = rng.random_range(8.0..40.0);
                let k = 2.0 * height as f64 / wavelength;
                let amp = rng.random_range(0.4..1.0) * (wavelength / 40.0).sqrt();
                (direction(rng) * k, amp, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let spots: Vec<_> = (0..24)
            .map(|_| {
                let radius = rng.random_range(0.04..0.15);
                let amp = rng.random_range(-1.5..1.5);
                (direction(rng), amp, radius)
            })
            .collect();
        let norm = waves.iter().map(|w| w.1 * w.1).sum::<f64>().sqrt();
        Self { waves, spots, norm }
    }

    /// Value in about [-1.5, 1.5].
    fn eval(&self, q: &Vector3<f64>) -> f64 {
        let waves: f64 = self.waves.iter().map(|(k, a, ph)| a * (k.dot(q) + ph).sin()).sum::<f64>() / self.norm;
        let spots: f64 = self
            .spots
            .iter()
            .map(|(c, a, r)| {
                let d2 = (q - c).norm_squared();
                a * (-d2 / (2.0 * r * r)).exp()
            })
            .sum();
        0.8 * waves + 0.4 * spots
    }
}

fn render(geom: FrameGeometry, depth: u8, texture: &SphereTexture, map: impl Fn(Vector3<f64>) -> Vector3<f64>) -> Result<Frame> {
    let max = ((1u32 << depth) - 1) as f64;
    Frame::from_fn(geom, depth, |u, v| {
        let q = erp_to_sphere(PixelCoord::new(u as f64, v as f64), geom).0;
        let p = map(q);
        let p = p / p.norm();
        max * (0.5 + 0.28 * texture.eval(&p))
    })
}

fn homogeneous(m: &AffineMatrix) -> Matrix3<f64> {
    let h = m.to_homogeneous();
    Matrix3::from_fn(|i, j| h[i][j])
}

/// Generates `frames` frames of seeded texture moving with `kind`.
///
/// With `T = frame t` and `I = frame t - 1`, every consecutive pair satisfies
/// `T(x) = I(W(x))` where `W` is the per-frame motion: a shift of
/// `-pixels` for pans, the rotation for sphere rotations and
/// [`SynthKind::pair_affine`] on the plane otherwise.
pub fn synthesize_sequence(kind: SynthKind, frames: usize, geom: FrameGeometry, depth: u8, seed: u64) -> Result<SyntheticSequence> {
    if frames == 0 {
        return Err(Error::InvalidConfig("at least one frame is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texture = SphereTexture::new(&mut rng, geom.height());
    let mut out = Vec::with_capacity(frames);
    let mut truth = Vec::with_capacity(frames);
    match kind {
        SynthKind::Pan { pixels } => {
            let base = render(geom, depth, &texture, |q| q)?;
            for t in 0..frames {
                let shift = t as f64 * pixels;
                let f = Frame::from_fn(geom, depth, |u, v| {
                    sample_bilinear(&base, PixelCoord::new(u as f64 - shift, v as f64))
                })?;
                out.push(f);
                truth.push(GroundTruth {
                    frame: t,
                    values: vec![shift],
                });
            }
        }
        SynthKind::RotateSphere { .. } => {
            let r = kind.rotation().unwrap();
            let mut cumulative = Matrix3::identity();
            for t in 0..frames {
                out.push(render(geom, depth, &texture, |q| cumulative * q)?);
                truth.push(GroundTruth {
                    frame: t,
                    values: cumulative.transpose().iter().copied().collect(),
                });
                cumulative = r * cumulative;
            }
        }
        SynthKind::ZoomOnPlane { .. } | SynthKind::AffineOnPlane { .. } => {
            let (plane, a) = kind.pair_affine().unwrap();
            let rot = MotionPlane::new(plane).rotation;
            let step = homogeneous(&a);
            let mut cumulative = Matrix3::identity();
            for t in 0..frames {
                let m = rot.transpose() * cumulative * rot;
                out.push(render(geom, depth, &texture, |q| m * q)?);
                truth.push(GroundTruth {
                    frame: t,
                    values: cumulative.fixed_rows::<2>(0).transpose().iter().copied().collect(),
                });
                cumulative *= step;
            }
        }
    }
    Ok(SyntheticSequence {
        kind,
        frames: out,
        truth,
    })
}
