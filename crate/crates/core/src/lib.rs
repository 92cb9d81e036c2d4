//! Twisted bilayer graphene: tight-binding dynamics with certified
//! truncation bounds, the continuum model, and comparisons between them.

pub mod error;
pub mod geometry;
pub mod hamiltonian;
pub mod bm;
pub mod bounds;
pub mod config;
pub mod envelope;
pub mod experiments;
pub mod nufft;
pub mod propagator;
pub mod state;
pub mod wavepacket;

pub use error::{Error, Result};
pub use geometry::{LatticeParams, Layer, SiteIndex, SiteTable, Sublattice, Vec2};
pub use bm::{BandIndex, BmParams};
pub use bounds::{BoundCertificate, ContourSpec};
pub use envelope::{Envelope, Grid};
pub use hamiltonian::{HoppingModel, SparseHermitian};
pub use propagator::{Method, PropagatorOptions};
pub use state::LatticeState;
pub use num_complex::Complex64;
