//! Density matrices, the spin-J measurement model, the three superoperators
//! of the filter equations, and scalar diagnostics.
//!
//! Everything here is written for the measurement operator `L = J_z`, which
//! is diagonal in the computational basis. The spectral projectors are then
//! the rank-one basis projectors `A_k = |k⟩⟨k|` with eigenvalues
//! `λ_k = J - k`, so `Tr(ρ A_k)` is simply the `k`-th diagonal entry.

use crate::error::{Error, Result};
use crate::linalg::{
    self, anticommutator, check_square, commutator, hermitian_defect, hermitian_eigen, psd_sqrt,
    CMatrix, C64, I,
};

/// Elementwise Hermiticity tolerance for a valid density matrix.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed deviation of the trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest eigenvalue allowed before a state is rejected.
pub const PSD_TOL: f64 = 1e-8;

/// Positive semi-definite, Hermitian, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(data: CMatrix) -> Result<Self> {
        if data.nrows() != data.ncols() || data.nrows() == 0 {
            return Err(Error::Domain(format!(
                "density matrix must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !linalg::is_finite(&data) {
            return Err(Error::Domain(
                "density matrix has non-finite entries".into(),
            ));
        }
        let defect = hermitian_defect(&data);
        if defect > HERMITIAN_TOL {
            return Err(Error::Domain(format!(
                "matrix is not Hermitian (defect {defect:.3e})"
            )));
        }
        let tr = data.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::Domain(format!("trace is {tr}, expected 1")));
        }
        let min = linalg::min_eigenvalue(&data);
        if min < -PSD_TOL {
            return Err(Error::Domain(format!(
                "matrix is not positive (min eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { data })
    }

    /// Skips validation. Callers guarantee the invariants.
    pub(crate) fn from_raw(data: CMatrix) -> Self {
        Self { data }
    }

    /// Diagonal state with the given populations.
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        Self::new(linalg::diag(populations))
    }

    /// The basis projector `A_k` viewed as a pure state.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut data = linalg::zeros(dim);
        data[(k, k)] = C64::new(1.0, 0.0);
        Self { data }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            data: linalg::identity(dim) / C64::new(dim as f64, 0.0),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// `Tr(ρ A_k)`.
    pub fn population(&self, k: usize) -> f64 {
        self.data[(k, k)].re
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.population(k)).collect()
    }

    /// `Re Tr(op ρ)`.
    pub fn expectation(&self, op: &CMatrix) -> f64 {
        linalg::trace_product(op, &self.data)
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.data, &self.data)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.data)
    }
}

/// Spin-J system measured along `J_z` and driven along `J_y`.
#[derive(Clone, Debug)]
pub struct SystemModel {
    dim: usize,
    spin: f64,
    jz: CMatrix,
    jy: CMatrix,
    projectors: Vec<CMatrix>,
    eigenvalues: Vec<f64>,
    eta: f64,
    omega: f64,
}

/// Default free-precession frequency. No value is given for the reference
/// simulations; it only rotates coherences of the true filter.
pub const DEFAULT_OMEGA: f64 = 1.0;

/// Builds `J_z`, `J_y` and the spectral data for an `N = dim` level system.
pub fn build_system(dim: usize, eta: f64, omega: f64) -> Result<SystemModel> {
    if dim < 2 {
        return Err(Error::InvalidConfiguration(format!(
            "dim must be at least 2, got {dim}"
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidConfiguration(format!(
            "eta must lie in (0, 1], got {eta}"
        )));
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(Error::InvalidConfiguration(format!(
            "omega must be finite and >= 0, got {omega}"
        )));
    }
    let spin = (dim as f64 - 1.0) / 2.0;
    let eigenvalues: Vec<f64> = (0..dim).map(|k| spin - k as f64).collect();
    let jz = linalg::diag(&eigenvalues);
    let mut jy = linalg::zeros(dim);
    for q in 1..dim {
        let c = jy_coupling(spin, q);
        jy[(q - 1, q)] = C64::new(0.0, -c);
        jy[(q, q - 1)] = C64::new(0.0, c);
    }
    let projectors = (0..dim)
        .map(|k| DensityMatrix::basis_state(dim, k).into_matrix())
        .collect();
    Ok(SystemModel {
        dim,
        spin,
        jz,
        jy,
        projectors,
        eigenvalues,
        eta,
        omega,
    })
}

/// `c_q = ½ √((2J + 1 - q) q)`.
pub fn jy_coupling(spin: f64, q: usize) -> f64 {
    let q = q as f64;
    0.5 * ((2.0 * spin + 1.0 - q) * q).sqrt()
}

impl SystemModel {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of measurement levels, `2J + 1`.
    pub fn levels(&self) -> usize {
        self.dim
    }

    pub fn spin(&self) -> f64 {
        self.spin
    }

    pub fn jz(&self) -> &CMatrix {
        &self.jz
    }

    pub fn jy(&self) -> &CMatrix {
        &self.jy
    }

    pub fn projector(&self, k: usize) -> &CMatrix {
        &self.projectors[k]
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    /// `λ_k = J - k`, in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Whether `k` is one of the extremal levels `0` or `2J`.
    pub fn is_edge(&self, k: usize) -> bool {
        k == 0 || k + 1 == self.dim
    }

    /// `H = ω J_z + u J_y`.
    pub fn hamiltonian(&self, u: f64) -> CMatrix {
        &self.jz * C64::new(self.omega, 0.0) + &self.jy * C64::new(u, 0.0)
    }

    /// `Tr(J_z ρ)` for any (not necessarily normalized) matrix.
    pub fn mean_jz(&self, rho: &CMatrix) -> f64 {
        (0..self.dim)
            .map(|k| self.eigenvalues[k] * rho[(k, k)].re)
            .sum()
    }

    /// `-i[ω J_z + u J_y, ρ]`, using the diagonal structure of `J_z` and the
    /// tridiagonal structure of `J_y`.
    pub fn hamiltonian_flow(&self, rho: &CMatrix, u: f64) -> CMatrix {
        let n = self.dim;
        let lam = &self.eigenvalues;
        let mut out = CMatrix::from_fn(n, n, |a, b| {
            -I * self.omega * (lam[a] - lam[b]) * rho[(a, b)]
        });
        if u != 0.0 {
            // (J_y ρ - ρ J_y)_{ab}; J_y only couples neighbouring levels.
            for a in 0..n {
                for b in 0..n {
                    let mut acc = C64::new(0.0, 0.0);
                    if a > 0 {
                        acc += self.jy[(a, a - 1)] * rho[(a - 1, b)];
                    }
                    if a + 1 < n {
                        acc += self.jy[(a, a + 1)] * rho[(a + 1, b)];
                    }
                    if b > 0 {
                        acc -= rho[(a, b - 1)] * self.jy[(b - 1, b)];
                    }
                    if b + 1 < n {
                        acc -= rho[(a, b + 1)] * self.jy[(b + 1, b)];
                    }
                    out[(a, b)] += -I * u * acc;
                }
            }
        }
        out
    }

    /// Dissipator for `L = J_z`: `(𝓕ρ)_{ab} = -½ (λ_a - λ_b)² ρ_{ab}`.
    pub fn dissipator(&self, rho: &CMatrix) -> CMatrix {
        let lam = &self.eigenvalues;
        CMatrix::from_fn(self.dim, self.dim, |a, b| {
            rho[(a, b)] * (-0.5 * (lam[a] - lam[b]).powi(2))
        })
    }

    /// Back-action for `L = J_z`: `√η (λ_a + λ_b - 2 Tr(J_z ρ)) ρ_{ab}`.
    pub fn backaction(&self, rho: &CMatrix) -> CMatrix {
        let lam = &self.eigenvalues;
        let mean = self.mean_jz(rho);
        let s = self.eta.sqrt();
        CMatrix::from_fn(self.dim, self.dim, |a, b| {
            rho[(a, b)] * (s * (lam[a] + lam[b] - 2.0 * mean))
        })
    }

    /// Linear part of the back-action: `√η (J_z ρ + ρ J_z)`.
    pub fn linear_backaction(&self, rho: &CMatrix) -> CMatrix {
        let lam = &self.eigenvalues;
        let s = self.eta.sqrt();
        CMatrix::from_fn(self.dim, self.dim, |a, b| {
            rho[(a, b)] * (s * (lam[a] + lam[b]))
        })
    }
}

fn check_pair(rho: &CMatrix, l: &CMatrix) -> Result<()> {
    check_square(l, l.nrows())?;
    check_square(rho, l.nrows())
}

/// Lindblad dissipator `L ρ L† - ½ (L†L ρ + ρ L†L)`.
pub fn superop_f(rho: &CMatrix, l: &CMatrix) -> Result<CMatrix> {
    check_pair(rho, l)?;
    let ld = l.adjoint();
    let ldl = &ld * l;
    Ok(linalg::hermitize(
        &(l * rho * &ld - anticommutator(&ldl, rho) * C64::new(0.5, 0.0)),
    ))
}

/// Measurement back-action `√η (L ρ + ρ L† - Tr[(L + L†) ρ] ρ)`.
pub fn superop_g(rho: &CMatrix, l: &CMatrix, eta: f64) -> Result<CMatrix> {
    check_pair(rho, l)?;
    let ld = l.adjoint();
    let mean = linalg::trace_product(&(l + &ld), rho);
    let out = (l * rho + rho * &ld - rho * C64::new(mean, 0.0)) * C64::new(eta.sqrt(), 0.0);
    Ok(linalg::hermitize(&out))
}

/// Drift of the Stratonovich form of the Zakai equation,
/// `(1-η) L ρ L† - ½ ((ηL + L†) L ρ + ρ L† (L + ηL†))`.
pub fn superop_fhat(rho: &CMatrix, l: &CMatrix, eta: f64) -> Result<CMatrix> {
    check_pair(rho, l)?;
    let ld = l.adjoint();
    let e = C64::new(eta, 0.0);
    let left = (l * e + &ld) * l * rho;
    let right = rho * &ld * (l + &ld * e);
    let out = l * rho * &ld * C64::new(1.0 - eta, 0.0) - (left + right) * C64::new(0.5, 0.0);
    Ok(linalg::hermitize(&out))
}

/// Root fidelity `Tr √(√a b √a)`.
pub fn root_fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_square(b.matrix(), a.dim())?;
    for (name, m) in [("first", a), ("second", b)] {
        let min = m.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::Domain(format!(
                "{name} argument is not positive semi-definite (min eigenvalue {min:.3e})"
            )));
        }
    }
    let sa = psd_sqrt(a.matrix());
    let inner = &sa * b.matrix() * &sa;
    let (values, _) = hermitian_eigen(&inner);
    Ok(values
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .sum::<f64>()
        .min(1.0))
}

/// Uhlmann fidelity `F = (Tr √(√a b √a))²`. Equals `Tr(a b)` when either
/// argument is pure.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    Ok(root_fidelity(a, b)?.powi(2))
}

/// Bures distance `√(2 - 2 √F)` with `F` the Uhlmann fidelity.
///
/// The argument order does not matter. For a pure `b` this reduces to
/// `√(2 - 2 √Tr(a b))`.
pub fn bures_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    let root = root_fidelity(a, b)?;
    Ok((2.0 - 2.0 * root).max(0.0).sqrt())
}

/// Bures distance to the basis projector `A_k`: `√(2 - 2 √ρ_kk)`.
pub fn bures_to_level(rho: &DensityMatrix, k: usize) -> f64 {
    (2.0 - 2.0 * rho.population(k).max(0.0).sqrt())
        .max(0.0)
        .sqrt()
}

/// Bures distance to the closest eigenprojector of `J_z`.
pub fn bures_to_equilibria(rho: &DensityMatrix) -> f64 {
    (0..rho.dim())
        .map(|k| bures_to_level(rho, k))
        .fold(f64::INFINITY, f64::min)
}

/// Variance of `J_z`, populations gaps `P_n`, rotation fluxes `Θ_n`, and the
/// `J_z` gap between two states.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarDiagnostics {
    pub variance_z: f64,
    pub p_n: Vec<f64>,
    pub theta_n: Vec<f64>,
    pub t_gap: f64,
}

/// `Tr(J_z² ρ) - Tr(J_z ρ)²`.
pub fn variance_z(rho: &DensityMatrix, model: &SystemModel) -> f64 {
    let mean = model.mean_jz(rho.matrix());
    let second: f64 = (0..model.dim())
        .map(|k| model.eigenvalue(k).powi(2) * rho.population(k))
        .sum();
    (second - mean * mean).max(0.0)
}

/// `P_n(ρ) = J - n - Tr(J_z ρ)`.
pub fn level_gap(rho: &DensityMatrix, model: &SystemModel, n: usize) -> f64 {
    model.spin() - n as f64 - model.mean_jz(rho.matrix())
}

/// `Θ_n(ρ) = Tr(i [J_y, ρ] A_n)`.
pub fn rotation_flux(rho: &DensityMatrix, model: &SystemModel, n: usize) -> f64 {
    let c = commutator(model.jy(), rho.matrix());
    (I * c[(n, n)]).re
}

/// `𝒯(ρ, σ) = Tr(J_z ρ) - Tr(J_z σ)`.
pub fn jz_gap(rho: &DensityMatrix, other: &DensityMatrix, model: &SystemModel) -> f64 {
    model.mean_jz(rho.matrix()) - model.mean_jz(other.matrix())
}

pub fn scalar_diagnostics(
    rho: &DensityMatrix,
    rho_cmp: &DensityMatrix,
    model: &SystemModel,
) -> Result<ScalarDiagnostics> {
    check_square(rho.matrix(), model.dim())?;
    check_square(rho_cmp.matrix(), model.dim())?;
    Ok(ScalarDiagnostics {
        variance_z: variance_z(rho, model),
        p_n: (0..model.levels())
            .map(|n| level_gap(rho, model, n))
            .collect(),
        theta_n: (0..model.levels())
            .map(|n| rotation_flux(rho, model, n))
            .collect(),
        t_gap: jz_gap(rho, rho_cmp, model),
    })
}
