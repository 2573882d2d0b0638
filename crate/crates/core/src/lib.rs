//! Hand-object pose estimation toolkit: geometry, metrics, dataset
//! preparation, feature fusion kernels, losses and masked diffusion repaint.

pub mod dataprep;
pub mod deoccluder;
pub mod evaluation;
pub mod fixture;
pub mod fusion;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod tensor;
