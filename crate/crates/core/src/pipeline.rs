//! Experiment runs over raw sequences: per-pair estimation and compensation
//! scores, rate-distortion sweeps with BD-rate summaries, synthetic sequence
//! generation and standalone metrics.
//!
//! Every output except `timing.csv` is a pure function of the inputs and the
//! configuration, whatever the size of the rayon pool.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::codec::{default_matrix, rd_points, DEFAULT_QP_LIST};
use crate::compensation::compensate_frame;
use crate::error::{Error, Result};
use crate::estimation::{estimate_frame, EstimatorConfig, Mode};
use crate::frame::Frame;
use crate::geometry::FrameGeometry;
use crate::metrics::{bd_rate, psnr, read_rd_csv, write_rd_csv, ws_psnr, RdCurve, RdPoint};
use crate::video::{downscale, plan_pairs, synthesize_sequence, write_sequence, ChromaLayout, FramePairPlan, SequenceMeta, SequenceSource, SynthKind};

/// Mode every relative number is measured against.
pub const ANCHOR: Mode = Mode::MpaTranslational;

/// Block sizes accepted by the experiment commands.
pub const BLOCK_SIZES: [usize; 2] = [16, 32];

/// Label of the rows averaged over all sequences.
pub const AVERAGE: &str = "average";

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Raw sequences, each with a `.meta` sidecar.
    pub inputs: Vec<PathBuf>,
    pub modes: Vec<Mode>,
    pub block_sizes: Vec<usize>,
    pub estimator: EstimatorConfig,
    pub qp_list: Vec<f64>,
    /// Number of evenly spread frame pairs per sequence.
    pub pairs: usize,
    /// Frames are area-downscaled to this geometry when they differ from it.
    pub target: Option<FrameGeometry>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    /// All modes, both block sizes, the default QP list and 32 pairs.
    pub fn new(inputs: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            inputs,
            modes: Mode::ALL.to_vec(),
            block_sizes: BLOCK_SIZES.to_vec(),
            estimator: EstimatorConfig::default(),
            qp_list: DEFAULT_QP_LIST.to_vec(),
            pairs: 32,
            target: None,
            out_dir: out_dir.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::InvalidConfig("no input sequences".into()));
        }
        for p in &self.inputs {
            for f in [p.clone(), SequenceMeta::sidecar_path(p)] {
                if !f.is_file() {
                    return Err(Error::InvalidConfig(format!("input file {} does not exist", f.display())));
                }
            }
        }
        let mut names: Vec<_> = self.inputs.iter().map(|p| sequence_name(p)).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) || names.iter().any(|n| n == AVERAGE) {
            return Err(Error::InvalidConfig("input file names must be distinct and not \"average\"".into()));
        }
        if self.modes.is_empty() || self.block_sizes.is_empty() {
            return Err(Error::InvalidConfig("mode and block size lists must not be empty".into()));
        }
        if let Some(bs) = self.block_sizes.iter().find(|b| !BLOCK_SIZES.contains(b)) {
            return Err(Error::InvalidConfig(format!("block size {bs} is not one of 16, 32")));
        }
        if self.qp_list.is_empty() || self.qp_list.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            return Err(Error::InvalidConfig("QP list must hold positive values".into()));
        }
        if self.pairs == 0 {
            return Err(Error::InvalidConfig("at least one frame pair is needed".into()));
        }
        self.estimator.validate()
    }
}

fn sequence_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "sequence".into(), |s| s.to_string_lossy().into_owned())
}

struct Sequence {
    name: String,
    source: SequenceSource,
    plan: FramePairPlan,
}

impl Sequence {
    fn frame(&self, index: usize, target: Option<FrameGeometry>) -> Result<Frame> {
        let f = self.source.read_luma(index)?;
        match target {
            Some(g) if g != f.geometry() => downscale(&f, g),
            _ => Ok(f),
        }
    }
}

fn open_sequences(cfg: &ExperimentConfig) -> Result<Vec<Sequence>> {
    cfg.inputs
        .iter()
        .map(|p| {
            let source = SequenceSource::open(p)?;
            let plan = plan_pairs(source.frame_count, cfg.pairs)?;
            Ok(Sequence {
                name: sequence_name(p),
                source,
                plan,
            })
        })
        .collect()
}

fn db(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.6}")
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

/// Scores of one mode and block size on one frame pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRow {
    pub sequence: String,
    pub template: usize,
    pub reference: usize,
    pub block_size: usize,
    pub mode: Mode,
    pub psnr: f64,
    pub ws_psnr: f64,
    pub mean_iterations: f64,
    /// Blocks whose affine refinement was rejected.
    pub fallbacks: usize,
    /// Wall time of estimation plus compensation.
    pub time: Duration,
}

/// Averages over the pairs of one sequence, or over all sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub sequence: String,
    pub block_size: usize,
    pub mode: Mode,
    pub psnr: f64,
    pub ws_psnr: f64,
    pub time: Duration,
    /// Time in percent of the anchor mode's time, when the anchor was run.
    pub relative_time: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub pairs: Vec<PairRow>,
    pub rows: Vec<ResultRow>,
}

impl EstimateReport {
    pub fn row(&self, sequence: &str, block_size: usize, mode: Mode) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.sequence == sequence && r.block_size == block_size && r.mode == mode)
    }
}

/// Estimates and compensates every planned pair with every mode and block
/// size. Writes motion fields under `fields/`, plus `pairs.csv`,
/// `results.csv`, `timing.csv` and `summary.txt`.
///
/// A pair that fails is skipped; all outputs are still written and the
/// failures are returned as [`Error::PairsFailed`].
pub fn cmd_estimate(cfg: &ExperimentConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let seqs = open_sequences(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for seq in &seqs {
        let dir = cfg.out_dir.join("fields").join(&seq.name);
        fs::create_dir_all(&dir)?;
        for &(t, r) in &seq.plan.pairs {
            match estimate_pair(cfg, seq, t, r, &dir) {
                Ok(rows) => pairs.extend(rows),
                Err(e) => failures.push(format!("({}, {t}): {e}", seq.name)),
            }
        }
    }
    let names: Vec<&str> = seqs.iter().map(|s| s.name.as_str()).collect();
    let report = EstimateReport {
        rows: aggregate(cfg, &names, &pairs),
        pairs,
    };
    write_estimate_outputs(cfg, &report)?;
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(Error::PairsFailed(failures))
    }
}

fn estimate_pair(cfg: &ExperimentConfig, seq: &Sequence, t: usize, r: usize, dir: &Path) -> Result<Vec<PairRow>> {
    let template = seq.frame(t, cfg.target)?;
    let reference = seq.frame(r, cfg.target)?;
    let mut rows = Vec::new();
    for &bs in &cfg.block_sizes {
        for &mode in &cfg.modes {
            let start = Instant::now();
            let est = estimate_frame(&template, &reference, mode, bs, &cfg.estimator)?;
            let field = est.field.quantized();
            let prediction = compensate_frame(&reference, &field)?;
            let time = start.elapsed();
            fs::write(dir.join(format!("t{t:04}_bs{bs}_{mode}.mpaf")), field.to_bytes())?;
            rows.push(PairRow {
                sequence: seq.name.clone(),
                template: t,
                reference: r,
                block_size: bs,
                mode,
                psnr: psnr(&template, &prediction)?,
                ws_psnr: ws_psnr(&template, &prediction)?,
                mean_iterations: mean(est.blocks.iter().map(|b| b.iterations as f64)),
                fallbacks: est.blocks.iter().filter(|b| b.fell_back).count(),
                time,
            });
        }
    }
    Ok(rows)
}

fn aggregate(cfg: &ExperimentConfig, names: &[&str], pairs: &[PairRow]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for &bs in &cfg.block_sizes {
        let mut per_seq = Vec::new();
        for &name in names {
            let start = rows.len();
            for &mode in &cfg.modes {
                let sel: Vec<_> = pairs
                    .iter()
                    .filter(|p| p.sequence == name && p.block_size == bs && p.mode == mode)
                    .collect();
                if sel.is_empty() {
                    continue;
                }
                rows.push(ResultRow {
                    sequence: name.to_string(),
                    block_size: bs,
                    mode,
                    psnr: mean(sel.iter().map(|p| p.psnr)),
                    ws_psnr: mean(sel.iter().map(|p| p.ws_psnr)),
                    time: sel.iter().map(|p| p.time).sum(),
                    relative_time: None,
                });
            }
            per_seq.push(start..rows.len());
        }
        for &mode in &cfg.modes {
            let sel: Vec<ResultRow> = per_seq
                .iter()
                .flat_map(|r| rows[r.clone()].iter())
                .filter(|r| r.mode == mode)
                .cloned()
                .collect();
            if sel.is_empty() {
                continue;
            }
            rows.push(ResultRow {
                sequence: AVERAGE.into(),
                block_size: bs,
                mode,
                psnr: mean(sel.iter().map(|r| r.psnr)),
                ws_psnr: mean(sel.iter().map(|r| r.ws_psnr)),
                time: sel.iter().map(|r| r.time).sum(),
                relative_time: None,
            });
        }
    }
    let anchors: Vec<(String, usize, Duration)> = rows
        .iter()
        .filter(|r| r.mode == ANCHOR)
        .map(|r| (r.sequence.clone(), r.block_size, r.time))
        .collect();
    for r in &mut rows {
        r.relative_time = anchors
            .iter()
            .find(|(s, bs, _)| *s == r.sequence && *bs == r.block_size)
            .map(|(_, _, t)| 100.0 * r.time.as_secs_f64() / t.as_secs_f64());
    }
    rows
}

fn anchor_of<'a>(rows: &'a [ResultRow], r: &ResultRow) -> Option<&'a ResultRow> {
    rows.iter()
        .find(|a| a.mode == ANCHOR && a.sequence == r.sequence && a.block_size == r.block_size)
}

fn write_estimate_outputs(cfg: &ExperimentConfig, report: &EstimateReport) -> Result<()> {
    let mut w = csv_writer(&cfg.out_dir.join("pairs.csv"))?;
    w.write_record(["sequence", "template", "reference", "bs", "mode", "psnr_db", "ws_psnr_db", "mean_iterations", "fallbacks"])?;
    for p in &report.pairs {
        w.write_record([
            p.sequence.clone(),
            p.template.to_string(),
            p.reference.to_string(),
            p.block_size.to_string(),
            p.mode.to_string(),
            db(p.psnr),
            db(p.ws_psnr),
            format!("{:.3}", p.mean_iterations),
            p.fallbacks.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&cfg.out_dir.join("results.csv"))?;
    w.write_record(["sequence", "bs", "mode", "psnr_db", "ws_psnr_db", "delta_psnr_db", "delta_ws_psnr_db"])?;
    for r in &report.rows {
        let (dp, dw) = anchor_of(&report.rows, r).map_or((String::new(), String::new()), |a| (db(r.psnr - a.psnr), db(r.ws_psnr - a.ws_psnr)));
        w.write_record([r.sequence.clone(), r.block_size.to_string(), r.mode.to_string(), db(r.psnr), db(r.ws_psnr), dp, dw])?;
    }
    w.flush()?;

    let mut w = csv_writer(&cfg.out_dir.join("timing.csv"))?;
    w.write_record(["sequence", "bs", "mode", "time_ms", "relative_time_pct"])?;
    for r in &report.rows {
        w.write_record([
            r.sequence.clone(),
            r.block_size.to_string(),
            r.mode.to_string(),
            format!("{:.3}", r.time.as_secs_f64() * 1e3),
            r.relative_time.map_or(String::new(), |x| format!("{x:.1}")),
        ])?;
    }
    w.flush()?;

    fs::write(cfg.out_dir.join("summary.txt"), estimate_summary(cfg, &report.rows))?;
    Ok(())
}

/// Reference PSNR and WS-PSNR deltas (dB) against the translational plane
/// mode on the six standard 360-degree test sequences, downscaled to 768x384:
/// `(block size, sequence, [tmc, mpa-ic6p, mpa-ic4p])`.
const REFERENCE_DELTAS: [(usize, &str, [(f64, f64); 3]); 14] = [
    (16, "Balboa", [(-0.93, -0.83), (0.83, 0.86), (0.48, 0.47)]),
    (16, "BranCastle2", [(-1.65, -0.97), (1.28, 1.30), (0.98, 0.88)]),
    (16, "Broadway", [(-0.84, -0.82), (1.05, 1.07), (0.56, 0.56)]),
    (16, "ChairliftRide", [(-2.19, -1.37), (0.61, 0.83), (0.37, 0.47)]),
    (16, "Landing2", [(-0.45, -0.29), (1.22, 1.23), (0.78, 0.78)]),
    (16, "SkateboardInLot", [(-0.48, -0.47), (1.39, 1.54), (0.66, 0.71)]),
    (16, AVERAGE, [(-1.09, -0.79), (1.06, 1.14), (0.63, 0.65)]),
    (32, "Balboa", [(-1.07, -1.01), (1.60, 1.65), (0.84, 0.85)]),
    (32, "BranCastle2", [(-1.66, -0.98), (2.10, 2.09), (1.54, 1.42)]),
    (32, "Broadway", [(-0.96, -0.99), (1.39, 1.39), (0.55, 0.54)]),
    (32, "ChairliftRide", [(-2.91, -1.78), (1.34, 1.22), (0.87, 0.69)]),
    (32, "Landing2", [(-0.49, -0.30), (1.58, 1.62), (0.90, 0.92)]),
    (32, "SkateboardInLot", [(-0.54, -0.54), (1.75, 1.95), (0.74, 0.81)]),
    (32, AVERAGE, [(-1.27, -0.93), (1.63, 1.66), (0.91, 0.87)]),
];

/// Reference deltas for a sequence whose name contains one of the standard
/// names (case-insensitive).
pub fn reference_delta(sequence: &str, block_size: usize, mode: Mode) -> Option<(f64, f64)> {
    let k = match mode {
        Mode::Tmc => 0,
        Mode::MpaIc6 => 1,
        Mode::MpaIc4 => 2,
        Mode::MpaTranslational => return None,
    };
    let lower = sequence.to_lowercase();
    REFERENCE_DELTAS
        .iter()
        .find(|(bs, name, _)| {
            *bs == block_size && if *name == AVERAGE { sequence == AVERAGE } else { lower.contains(&name.to_lowercase()) }
        })
        .map(|(_, _, d)| d[k])
}

fn estimate_summary(cfg: &ExperimentConfig, rows: &[ResultRow]) -> String {
    let mut s = String::new();
    for &bs in &cfg.block_sizes {
        let _ = writeln!(s, "block size {bs}");
        let _ = writeln!(
            s,
            "  {:<24} {:<9} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9}",
            "sequence", "mode", "psnr", "ws-psnr", "d_psnr", "d_ws", "ref_d", "ref_d_ws"
        );
        for r in rows.iter().filter(|r| r.block_size == bs) {
            let (dp, dw) = match anchor_of(rows, r) {
                Some(a) if r.mode != ANCHOR => (db(r.psnr - a.psnr), db(r.ws_psnr - a.ws_psnr)),
                _ => ("-".into(), "-".into()),
            };
            let (rp, rw) = reference_delta(&r.sequence, bs, r.mode).map_or(("-".into(), "-".into()), |(p, w)| (format!("{p:+.2}"), format!("{w:+.2}")));
            let _ = writeln!(
                s,
                "  {:<24} {:<9} {:>10} {:>10} {:>9} {:>9} {:>9} {:>9}",
                r.sequence,
                r.mode.as_str(),
                fmt2(r.psnr),
                fmt2(r.ws_psnr),
                trim(dp),
                trim(dw),
                rp,
                rw
            );
        }
        s.push('\n');
    }
    s
}

fn fmt2(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.2}")
    } else {
        db(x)
    }
}

fn trim(x: String) -> String {
    x.parse::<f64>().map_or(x, |v| if v.is_finite() { format!("{v:+.2}") } else { db(v) })
}

/// Averaged operating point of one sequence, block size, mode and QP.
#[derive(Clone, Debug, PartialEq)]
pub struct RdRow {
    pub sequence: String,
    pub block_size: usize,
    pub mode: Mode,
    pub qp_scale: f64,
    pub rate_bpp: f64,
    /// Mean header, motion, table and residual bits per frame.
    pub bits: [f64; 4],
    pub psnr: f64,
    pub ws_psnr: f64,
}

/// BD-rate of one mode against the anchor, in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct BdRow {
    pub sequence: String,
    pub block_size: usize,
    pub mode: Mode,
    pub bd_rate: std::result::Result<f64, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RdReport {
    pub rows: Vec<RdRow>,
    pub bd: Vec<BdRow>,
}

impl RdReport {
    pub fn curve(&self, sequence: &str, block_size: usize, mode: Mode) -> Result<RdCurve> {
        RdCurve::new(
            self.rows
                .iter()
                .filter(|r| r.sequence == sequence && r.block_size == block_size && r.mode == mode)
                .map(|r| RdPoint::new(r.rate_bpp, r.ws_psnr))
                .collect(),
        )
    }

    pub fn bd(&self, sequence: &str, block_size: usize, mode: Mode) -> Option<&BdRow> {
        self.bd
            .iter()
            .find(|b| b.sequence == sequence && b.block_size == block_size && b.mode == mode)
    }
}

fn rd_label(sequence: &str, block_size: usize, mode: Mode) -> String {
    format!("{sequence}/bs{block_size}/{mode}")
}

/// Codes every planned pair at every QP with every mode and block size,
/// averages rate and quality over the pairs and computes BD-rates against
/// the anchor mode. Writes `rd.csv`, `rd_detail.csv`, `bd.csv` and
/// `rd_summary.txt`.
pub fn cmd_rd(cfg: &ExperimentConfig) -> Result<RdReport> {
    cfg.validate()?;
    let seqs = open_sequences(cfg)?;
    fs::create_dir_all(&cfg.out_dir)?;
    let nq = cfg.qp_list.len();
    let mut failures = Vec::new();
    let mut rows = Vec::new();
    for seq in &seqs {
        // (bs, mode) -> per-QP sums of [rate, header, motion, table, residual, psnr, ws-psnr]
        let mut sums: BTreeMap<(usize, Mode), Vec<[f64; 7]>> = BTreeMap::new();
        let mut ok = 0usize;
        for &(t, r) in &seq.plan.pairs {
            match rd_pair(cfg, seq, t, r) {
                Ok(pair) => {
                    ok += 1;
                    for (key, samples) in pair {
                        let acc = sums.entry(key).or_insert_with(|| vec![[0.0; 7]; nq]);
                        for (a, x) in acc.iter_mut().zip(samples) {
                            for (ai, xi) in a.iter_mut().zip(x) {
                                *ai += xi;
                            }
                        }
                    }
                }
                Err(e) => failures.push(format!("({}, {t}): {e}", seq.name)),
            }
        }
        if ok == 0 {
            continue;
        }
        for &bs in &cfg.block_sizes {
            for &mode in &cfg.modes {
                for (qi, a) in sums[&(bs, mode)].iter().enumerate() {
                    let m = a.map(|x| x / ok as f64);
                    rows.push(RdRow {
                        sequence: seq.name.clone(),
                        block_size: bs,
                        mode,
                        qp_scale: cfg.qp_list[qi],
                        rate_bpp: m[0],
                        bits: [m[1], m[2], m[3], m[4]],
                        psnr: m[5],
                        ws_psnr: m[6],
                    });
                }
            }
        }
    }
    let names: Vec<String> = rows.iter().map(|r| r.sequence.clone()).fold(Vec::new(), |mut v, n| {
        if !v.contains(&n) {
            v.push(n);
        }
        v
    });
    if names.len() > 1 {
        rows.extend(average_rd_rows(cfg, &rows, names.len()));
    }
    let mut report = RdReport { rows, bd: Vec::new() };
    let mut all_names = names;
    if all_names.len() > 1 {
        all_names.push(AVERAGE.into());
    }
    for name in &all_names {
        for &bs in &cfg.block_sizes {
            let anchor = report.curve(name, bs, ANCHOR);
            for &mode in &cfg.modes {
                let bd = match (&anchor, report.curve(name, bs, mode)) {
                    (Ok(a), Ok(t)) => bd_rate(a, &t).map_err(|e| e.to_string()),
                    (Err(_), _) if !cfg.modes.contains(&ANCHOR) => Err("anchor mode not run".into()),
                    (Err(e), _) => Err(e.to_string()),
                    (_, Err(e)) => Err(e.to_string()),
                };
                report.bd.push(BdRow {
                    sequence: name.clone(),
                    block_size: bs,
                    mode,
                    bd_rate: bd,
                });
            }
        }
    }
    write_rd_outputs(cfg, &report)?;
    if failures.is_empty() {
        Ok(report)
    } else {
        Err(Error::PairsFailed(failures))
    }
}

type PairSamples = Vec<((usize, Mode), Vec<[f64; 7]>)>;

fn rd_pair(cfg: &ExperimentConfig, seq: &Sequence, t: usize, r: usize) -> Result<PairSamples> {
    let template = seq.frame(t, cfg.target)?;
    let reference = seq.frame(r, cfg.target)?;
    let mut out = Vec::new();
    for &bs in &cfg.block_sizes {
        for &mode in &cfg.modes {
            let est = estimate_frame(&template, &reference, mode, bs, &cfg.estimator)?;
            let samples = rd_points(&template, &reference, &est.field, mode, default_matrix(), &cfg.qp_list)?;
            let v = samples
                .iter()
                .map(|s| {
                    [
                        s.rate_bpp,
                        s.bits.header as f64,
                        s.bits.motion as f64,
                        s.bits.table as f64,
                        s.bits.residual as f64,
                        s.psnr,
                        s.ws_psnr,
                    ]
                })
                .collect();
            out.push(((bs, mode), v));
        }
    }
    Ok(out)
}

fn average_rd_rows(cfg: &ExperimentConfig, rows: &[RdRow], n: usize) -> Vec<RdRow> {
    let mut out = Vec::new();
    for &bs in &cfg.block_sizes {
        for &mode in &cfg.modes {
            for &qp in &cfg.qp_list {
                let sel: Vec<_> = rows
                    .iter()
                    .filter(|r| r.block_size == bs && r.mode == mode && r.qp_scale == qp)
                    .collect();
                if sel.len() != n {
                    continue;
                }
                out.push(RdRow {
                    sequence: AVERAGE.into(),
                    block_size: bs,
                    mode,
                    qp_scale: qp,
                    rate_bpp: mean(sel.iter().map(|r| r.rate_bpp)),
                    bits: std::array::from_fn(|k| mean(sel.iter().map(|r| r.bits[k]))),
                    psnr: mean(sel.iter().map(|r| r.psnr)),
                    ws_psnr: mean(sel.iter().map(|r| r.ws_psnr)),
                });
            }
        }
    }
    out
}

fn write_rd_outputs(cfg: &ExperimentConfig, report: &RdReport) -> Result<()> {
    let points: Vec<(String, RdPoint)> = report
        .rows
        .iter()
        .map(|r| (rd_label(&r.sequence, r.block_size, r.mode), RdPoint::new(r.rate_bpp, r.ws_psnr)))
        .collect();
    write_rd_csv(BufWriter::new(File::create(cfg.out_dir.join("rd.csv"))?), &points)?;

    let mut w = csv_writer(&cfg.out_dir.join("rd_detail.csv"))?;
    w.write_record([
        "sequence", "bs", "mode", "qp_scale", "rate_bpp", "header_bits", "motion_bits", "table_bits", "residual_bits", "psnr_db", "ws_psnr_db",
    ])?;
    for r in &report.rows {
        let mut rec = vec![r.sequence.clone(), r.block_size.to_string(), r.mode.to_string(), r.qp_scale.to_string(), format!("{:.6}", r.rate_bpp)];
        rec.extend(r.bits.iter().map(|b| format!("{b:.2}")));
        rec.extend([db(r.psnr), db(r.ws_psnr)]);
        w.write_record(&rec)?;
    }
    w.flush()?;

    let mut w = csv_writer(&cfg.out_dir.join("bd.csv"))?;
    w.write_record(["sequence", "bs", "mode", "bd_rate_pct"])?;
    for b in &report.bd {
        let v = b.bd_rate.as_ref().map_or_else(|e| format!("n/a ({e})"), |x| format!("{x:.4}"));
        w.write_record([b.sequence.clone(), b.block_size.to_string(), b.mode.to_string(), v])?;
    }
    w.flush()?;

    let mut s = format!("BD-rate against {ANCHOR} (negative values are savings)\n");
    for &bs in &cfg.block_sizes {
        let _ = writeln!(s, "block size {bs}");
        for b in report.bd.iter().filter(|b| b.block_size == bs) {
            let v = b.bd_rate.as_ref().map_or_else(|e| format!("n/a ({e})"), |x| format!("{x:+.2} %"));
            let _ = writeln!(s, "  {:<24} {:<9} {v}", b.sequence, b.mode.as_str());
        }
    }
    fs::write(cfg.out_dir.join("rd_summary.txt"), s)?;
    Ok(())
}

/// What to synthesize.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthRequest {
    pub kind: SynthKind,
    pub frames: usize,
    pub geometry: FrameGeometry,
    pub depth: u8,
    pub seed: u64,
    pub fps: f64,
}

/// Paths written by [`cmd_synth`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub sequence: PathBuf,
    pub meta: PathBuf,
    pub truth: PathBuf,
}

/// Writes `<name>.yuv` (luma only), its sidecar and `<name>_truth.csv`.
pub fn cmd_synth(req: &SynthRequest, out_dir: &Path, name: &str) -> Result<SynthOutput> {
    let seq = synthesize_sequence(req.kind, req.frames, req.geometry, req.depth, req.seed)?;
    fs::create_dir_all(out_dir)?;
    let sequence = out_dir.join(format!("{name}.yuv"));
    write_sequence(&sequence, &seq.frames, ChromaLayout::Luma, req.fps)?;
    let truth = out_dir.join(format!("{name}_truth.csv"));
    seq.write_truth(BufWriter::new(File::create(&truth)?))?;
    Ok(SynthOutput {
        meta: SequenceMeta::sidecar_path(&sequence),
        sequence,
        truth,
    })
}

/// Quality of one decoded or predicted frame against the original.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameScore {
    pub frame: usize,
    pub psnr: f64,
    pub ws_psnr: f64,
}

/// Frame-by-frame PSNR and WS-PSNR of `test` against `original`.
pub fn compare_sequences(original: &Path, test: &Path) -> Result<Vec<FrameScore>> {
    let a = SequenceSource::open(original)?;
    let b = SequenceSource::open(test)?;
    if a.frame_count != b.frame_count {
        return Err(Error::GeometryMismatch(format!("{} frames against {}", a.frame_count, b.frame_count)));
    }
    (0..a.frame_count)
        .map(|i| {
            let (fa, fb) = (a.read_luma(i)?, b.read_luma(i)?);
            Ok(FrameScore {
                frame: i,
                psnr: psnr(&fa, &fb)?,
                ws_psnr: ws_psnr(&fa, &fb)?,
            })
        })
        .collect()
}

/// BD-rate of every curve in an RD CSV against the curve labelled `anchor`.
pub fn bd_from_csv(path: &Path, anchor: &str) -> Result<Vec<(String, Result<f64>)>> {
    let groups = read_rd_csv(File::open(path)?)?;
    let anchor_curve = groups
        .iter()
        .find(|(l, _)| l == anchor)
        .ok_or_else(|| Error::InvalidConfig(format!("no curve labelled {anchor:?}")))
        .and_then(|(_, pts)| RdCurve::new(pts.clone()))?;
    Ok(groups
        .into_iter()
        .map(|(label, pts)| {
            let bd = RdCurve::new(pts).and_then(|c| bd_rate(&anchor_curve, &c));
            (label, bd)
        })
        .collect())
}
