//! Numerical laboratory for a disordered tight-binding particle coupled to
//! on-site quantum oscillators, worked entirely in the explicit eigenbasis
//! of the zero-hopping operator.
//!
//! The crate builds finite lattice regions, enumerates truncated
//! particle-oscillator bases, assembles the coupled Hamiltonian and its
//! block restrictions, and runs the measurement machinery on top: exact
//! operator identities, a family of Fock-space metrics, Green's-function
//! decay statistics over disorder, gap-decay probes, and spectral
//! correlators that certify dynamical localization.

pub mod basis;
pub mod correlator;
pub mod disorder;
pub mod error;
pub mod fit;
pub mod hamiltonian;
pub mod lattice;
pub mod metrics;
pub mod oscillator;
pub mod params;
pub mod resolvent;
pub mod rng;
pub mod sweep;

pub use basis::{BasisEnumeration, BasisState, OscillatorConfig, TruncationPolicy};
pub use disorder::{sample_disorder, DensityKind, DisorderSample};
pub use error::{Error, Result};
pub use hamiltonian::{assemble, hopping_remainder, OperatorMatrix, Spectrum, SubspaceSelector};
pub use lattice::{LatticeRegion, SiteId};
pub use params::ModelParams;
