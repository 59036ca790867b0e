//! Model builders shared by the benchmarks.

use std::sync::Arc;

use kacmix::rng::{stream_rng, ChainRng};
use kacmix::{Boundary, EnergyState, KacKernel, ModelParams, SpinConfig, TorusLattice};

/// Kac model on a `side^dim` torus at `α ≡ 0`, started from a random configuration.
pub fn kac_state(dim: usize, side: usize, gamma: f64, beta: f64, seed: u64) -> (EnergyState, ChainRng) {
    let lattice = TorusLattice::new(dim, side).expect("valid lattice");
    let kernel = Arc::new(KacKernel::build(gamma, lattice, true).expect("valid kernel"));
    let params = Arc::new(ModelParams::kac_constant(beta, kernel, 0.0).expect("valid model"));
    let mut rng = stream_rng(seed, 0);
    let config = SpinConfig::random(lattice, &mut rng);
    (EnergyState::new(params, config).expect("matching lattice"), rng)
}

/// Nearest-neighbour model at zero field.
pub fn nn_params(dim: usize, side: usize, beta: f64, boundary: Boundary) -> Arc<ModelParams> {
    let lattice = TorusLattice::new(dim, side).expect("valid lattice");
    Arc::new(ModelParams::nearest_neighbour(lattice, beta, boundary, 0.0).expect("valid model"))
}
