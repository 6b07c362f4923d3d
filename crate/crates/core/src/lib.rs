//! RRC signaling-storm simulation, detection and mitigation.

pub mod clustering;
pub mod detector;
pub mod e2lite;
pub mod harness;
pub mod mitigator;
pub mod model;
pub mod ransim;
pub mod xapp;

pub use model::{
    default_params, AlgorithmParams, Centroid, DetectionVerdict, Fingerprint, SimTime, VerdictKind,
    WindowKpm,
};
