//! Event-aided deblurring for Gaussian-splat scene reconstruction.
//!
//! Motion-blurred frames are modelled as the average of sharp splat renders
//! along a per-exposure camera trajectory. Event streams recorded during each
//! exposure supervise the brightness changes between those renders, and an
//! event-based double-integral (EDI) estimate of the mid-exposure frame acts
//! as a sharpness prior. Scene parameters and trajectory endpoints are
//! optimized jointly.

pub mod dataset;
pub mod edi;
pub mod error;
pub mod fixtures;
pub mod geometry;
pub mod image;
pub mod losses;
pub mod events;
pub mod render;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{se3_exp, se3_log, ExposureTrajectory, Pose, Twist};
pub use image::RadianceImage;
pub use render::{render, render_blurred, render_with_grad, GradientBuffer, Projected2D};
pub use scene::{covariance_of, init_scene, sh_to_color, CameraIntrinsics, GaussianPrimitive, Scene};
