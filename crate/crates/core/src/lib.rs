//! Demonstration-to-program pipeline for a simulated blocks world:
//! cuboid scene modeling and projection, belief-map encoding/decoding,
//! keypoint metrics, pairwise relationship inference, program synthesis,
//! and closed-loop execution with fault recovery.

pub mod beliefmap;
pub mod executor;
pub mod geometry;
pub mod metrics;
pub mod neural;
pub mod program;
pub mod relationship;
