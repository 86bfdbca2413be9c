//! Reference initial states for the four-level simulations.

use crate::linalg::{self, C64};
use crate::quantum::DensityMatrix;

/// `ρ₀ = diag(0.2, 0.2, 0.3, 0.3)`.
pub fn reference_initial_state() -> DensityMatrix {
    DensityMatrix::from_populations(&[0.2, 0.2, 0.3, 0.3]).expect("valid reference state")
}

/// `ρ̄₀`: the same populations with imaginary `0-3` and `1-2` coherences.
pub fn reference_base_state() -> DensityMatrix {
    let mut m = linalg::diag(&[0.2, 0.2, 0.3, 0.3]);
    m[(0, 3)] = C64::new(0.0, 0.1);
    m[(3, 0)] = C64::new(0.0, -0.1);
    m[(1, 2)] = C64::new(0.0, -0.1);
    m[(2, 1)] = C64::new(0.0, 0.1);
    DensityMatrix::new(m).expect("valid reference state")
}

/// Variant of [`reference_base_state`] with real coherences `0.1` between
/// neighbouring levels. Unlike the reference state it couples the control
/// field to the family, so the quadratic terms of the `ξ` equation are live.
pub fn coupled_base_state() -> DensityMatrix {
    let mut m = linalg::diag(&[0.2, 0.2, 0.3, 0.3]);
    for k in 0..3 {
        m[(k, k + 1)] = C64::new(0.1, 0.0);
        m[(k + 1, k)] = C64::new(0.1, 0.0);
    }
    DensityMatrix::new(m).expect("valid reference state")
}
