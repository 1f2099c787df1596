//! Motion plane adaptive (MPA) inter prediction for equirectangular
//! 360-degree video, with affine plane motion estimated by the inverse
//! compositional Lucas-Kanade algorithm, plus the evaluation tools around it:
//! WS-PSNR, a basic residual codec and Bjøntegaard-delta rates.

pub mod codec;
pub mod compensation;
pub mod error;
pub mod estimation;
pub mod field;
pub mod frame;
pub mod geometry;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod video;

pub use compensation::{assemble_frame, compensate_frame, predict_block, BlockSpec, PredictedBlock};
pub use error::{Error, Result};
pub use field::MotionField;
pub use frame::{sample_bilinear, Frame};
pub use geometry::{FrameGeometry, Hemisphere, MotionPlane, PixelCoord, PlaneId, PlanePoint, SpherePoint};
pub use motion::{AffineMatrix, AffineModel, AffineParams, BlockMotion, PlaneModel, PlaneMotion, TranslationVector};
pub use estimation::{estimate_frame, EstimatorConfig, IcLkConfig, Mode, SearchConfig};
pub use metrics::{bd_rate, psnr, ws_psnr, RdCurve, RdPoint};
pub use codec::{decode_frame, encode_frame, rd_sweep, Bitstream, QuantConfig};
pub use video::{plan_pairs, synthesize_sequence, SequenceSource, SynthKind};
pub use pipeline::{cmd_estimate, cmd_rd, cmd_synth, ExperimentConfig, ResultRow};
