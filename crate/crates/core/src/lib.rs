//! Ising lattice with a Kac-type penalty: energies, exact enumeration,
//! infinite-volume thermodynamics, samplers and diagnostics.

pub mod energy;
pub mod error;
pub mod exact;
pub mod fk;
pub mod hist;
pub mod kernel;
pub mod lattice;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod thermo;
pub mod unionfind;
pub mod young;

pub use energy::{Boundary, Bonds, EnergyState, ModelParams};
pub use error::{Error, Result};
pub use kernel::{CoarseKernel, KacKernel, Mollifier};
pub use lattice::{BlockPartition, SpinConfig, TorusLattice};
