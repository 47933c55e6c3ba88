//! Behavioral device-category inference from home-gateway telemetry.
//!
//! The pipeline runs in stages: [`ingest`] parses gateway traces into
//! per-device timelines, [`labeler`] derives conservative ground-truth
//! categories from static descriptors, [`features`] computes the
//! 92-dimensional behavioral fingerprint, [`analysis`] rescales and ranks
//! features, [`classify`] trains and cross-validates the classifiers,
//! [`rules`] induces per-class conjunctive behavior descriptors, and
//! [`synth`] generates seeded synthetic corpora with known ground truth for
//! end-to-end verification.

pub mod analysis;
pub mod classify;
pub mod features;
pub mod ingest;
pub mod labeler;
pub mod rules;
pub mod synth;
pub mod telemetry;
