//! Shared fixtures for the benchmarks.

use mpa_core::{synthesize_sequence, Frame, FrameGeometry, PlaneId, SynthKind};

/// Consecutive (template, reference) frames of a zoom on the front-back
/// plane at `width` x `width / 2`.
pub fn zoom_pair(width: usize) -> (Frame, Frame) {
    let geom = FrameGeometry::new(width, width / 2).expect("even width");
    let kind = SynthKind::ZoomOnPlane { plane: PlaneId::FrontBack, zoom: 0.03 };
    let mut frames = synthesize_sequence(kind, 2, geom, 8, 1).expect("valid request").frames;
    let reference = frames.remove(0);
    (frames.remove(0), reference)
}
