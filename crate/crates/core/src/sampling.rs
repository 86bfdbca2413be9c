//! Seeded random states and matrices, used by the assumption validator and
//! by the tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMatrix, C64};
use crate::quantum::DensityMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Full-rank mixed state `G G† / Tr(G G†)`.
pub fn random_density_with<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix {
    let g = ginibre(rng, dim);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_raw(crate::linalg::hermitize(&(m / C64::new(tr, 0.0))))
}

pub fn random_density(dim: usize, seed: u64) -> DensityMatrix {
    random_density_with(&mut rng(seed), dim)
}

/// Haar-random pure state `|ψ⟩⟨ψ|`.
pub fn random_pure_with<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DensityMatrix {
    let psi: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    DensityMatrix::from_raw(CMatrix::from_fn(dim, dim, |a, b| {
        psi[a] * psi[b].conj() / norm
    }))
}

/// Hermitian matrix with Gaussian entries, not normalized.
pub fn random_hermitian_with<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    crate::linalg::hermitize(&ginibre(rng, dim))
}

/// Vector of standard normals.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}
