//! Homodyne tomography of heralded, phase-randomized single-mode states.
//!
//! The crate simulates raw balanced-homodyne segments recorded around
//! heralding triggers, extracts the temporal mode from their variance,
//! calibrates quadratures against a vacuum reference, reconstructs the
//! photon-number distribution (least-squares histogram fit and
//! expectation-maximization) and evaluates the Wigner function with bootstrap
//! error bars on its negativity.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fock;
pub mod numeric;
pub mod pipeline;
pub mod recon;
pub mod reference;
pub mod rng;
pub mod segio;
pub mod sim;
pub mod wigner;

pub use error::{Error, Result};
pub use fock::{PhotonNumberDistribution, QuadratureValue};
pub use pipeline::{ModeFunction, QuadratureDataset, VarianceTrace};
pub use recon::{EmOptions, EmResult, HistogramModel, LsFit};
pub use sim::{BatchKind, Segment, SegmentBatch, SimulationConfig};
pub use wigner::{BootstrapReport, NegativityReport, WignerGrid};
