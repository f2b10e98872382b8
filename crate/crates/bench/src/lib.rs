//! Shared inputs for the kernel benchmarks.

use evdeblur_core::dataset::{synthesize, SynthConfig, SynthData};

/// Default-resolution synthetic data (64×64, 200 Gaussians) with two views
/// and their dense frames kept.
pub fn workload() -> SynthData {
    synthesize(&SynthConfig {
        views: 2,
        eval_views: 1,
        keep_frames: true,
        ..Default::default()
    })
    .expect("default synthetic configuration is valid")
}
