//! Variational encoding of voxelized 3D shapes with label-conditional Gaussian
//! priors, and the probabilistic machinery built on the encoded features:
//! maximum-likelihood classification, shape retrieval and EM semantic SLAM
//! with exhaustive data association.
//!
//! Module map:
//!
//! - [`gradcore`]: reverse-mode autodiff tape, 3D conv layers, Adam.
//! - [`voxeldata`]: procedural shapes, single-view ray casting, augmentation.
//! - [`vae`]: factorized encoder/decoder/prior networks and the training loss.
//! - [`inference`]: κ-term factorization, MLE classification, retrieval metrics.
//! - [`slam`]: simulated worlds, association enumeration, EM weights, Gauss-Newton.
//! - [`store`]: checkpoints, dataset files, metrics CSV, run configuration.
//! - [`verify`]: seeded oracle suites for the inference and SLAM identities.

pub mod error;
pub mod seeds;
pub mod gradcore;
pub mod inference;
pub mod slam;
pub mod store;
pub mod vae;
pub mod verify;
pub mod voxeldata;

pub use error::{Error, Result};
