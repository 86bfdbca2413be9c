//! The exponential family `ρ̌_θ = e^{½Σθ_jA_j} ρ̄₀ e^{½Σθ_jA_j}`, its
//! `θ` and `ξ` charts, the Fisher metric and the orthogonal projection onto
//! its tangent space.
//!
//! Because the `A_k` are commuting rank-one projectors the exponentials
//! reduce to the closed form `(ρ̌_θ)_{ab} = e^{(θ_a+θ_b)/2} (ρ̄₀)_{ab}`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, check_square, CMatrix, C64, I};
use crate::quantum::{DensityMatrix, SystemModel};

/// Fixed data of the family: base state, model and target level.
#[derive(Clone, Debug)]
pub struct FamilyContext {
    base: DensityMatrix,
    model: SystemModel,
    target: usize,
    weights: Vec<f64>,
    coeff: Vec<Vec<f64>>,
}

impl FamilyContext {
    /// Every population `Tr(ρ̄₀ A_k)` must be strictly positive, otherwise
    /// the family misses an eigenstate and the Fisher metric degenerates.
    pub fn new(base: DensityMatrix, model: SystemModel, target: usize) -> Result<Self> {
        check_square(base.matrix(), model.dim())?;
        if target >= model.levels() {
            return Err(Error::InvalidConfiguration(format!(
                "target level {target} out of range 0..{}",
                model.levels()
            )));
        }
        let weights = base.populations();
        if let Some(k) = weights.iter().position(|&q| !(q > 0.0)) {
            return Err(Error::InvalidConfiguration(format!(
                "base state must satisfy Tr(rho_bar0 A_k) > 0 for every k; Tr(rho_bar0 A_{k}) = {}",
                weights[k]
            )));
        }
        let n = model.dim();
        let mut coeff = vec![vec![0.0; n]; n];
        for (k, row) in coeff.iter_mut().enumerate() {
            for (p, c) in row.iter_mut().enumerate() {
                if p == k {
                    continue;
                }
                let ak = model.projector(k);
                let ap = model.projector(p);
                let rb = base.matrix();
                let m = model.jy() * (ap * rb * ak - ak * rb * ap) * I;
                *c = m.trace().re / (2.0 * weights[k]);
            }
        }
        Ok(Self {
            base,
            model,
            target,
            weights,
            coeff,
        })
    }

    pub fn base(&self) -> &DensityMatrix {
        &self.base
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `q_k = Tr(ρ̄₀ A_k)`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `Tr(iJ_y(A_pρ̄₀A_k - A_kρ̄₀A_p)) / (2 Tr(ρ̄₀A_k))`.
    pub fn coupling(&self, k: usize, p: usize) -> f64 {
        self.coeff[k][p]
    }

    /// Coupling row of the target level, the coefficients of the quadratic
    /// term in the `ξ` equation.
    pub fn target_coupling(&self, p: usize) -> f64 {
        self.coeff[self.target][p]
    }

    /// `(λ_n̄ - λ_k) Tr(A_k ρ̄₀)`.
    pub fn interior_weight(&self, k: usize) -> f64 {
        (self.model.eigenvalue(self.target) - self.model.eigenvalue(k)) * self.weights[k]
    }

    /// Whether the quadratic term of the `ξ` equation vanishes, i.e.
    /// `Tr(J_y(A_pρ̄₀A_n̄ - A_n̄ρ̄₀A_p)) = 0` for all `p`.
    pub fn is_commuting(&self) -> bool {
        self.coeff[self.target].iter().all(|c| c.abs() < 1e-14)
    }

    /// Whether the control field couples to the family at all.
    pub fn is_control_blind(&self) -> bool {
        self.coeff.iter().flatten().all(|c| c.abs() < 1e-14)
    }

    /// Length of a `ξ` vector, `2J`.
    pub fn xi_len(&self) -> usize {
        self.dim() - 1
    }
}

/// Natural parameters `θ ∈ R^{2J+1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaCoords {
    theta: Vec<f64>,
}

impl ThetaCoords {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("theta has non-finite entries".into()));
        }
        Ok(Self { theta })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            theta: vec![0.0; len],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.theta
    }

    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `θ + μ𝟙`.
    pub fn shifted(&self, mu: f64) -> Self {
        Self {
            theta: self.theta.iter().map(|x| x + mu).collect(),
        }
    }
}

/// Reduced coordinates `ξ_k = e^{(θ_k - θ_n̄)/2}`, `k ≠ n̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct XiCoords {
    xi: Vec<f64>,
}

impl XiCoords {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("xi has non-finite entries".into()));
        }
        Ok(Self { xi })
    }

    /// `ξ = (1, …, 1)`, the image of `θ = 0`.
    pub fn ones(len: usize) -> Self {
        Self { xi: vec![1.0; len] }
    }

    pub fn zeros(len: usize) -> Self {
        Self { xi: vec![0.0; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.xi
    }

    pub fn values_mut(&mut self) -> &mut Vec<f64> {
        &mut self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Length-`2J+1` vector with the convention `ξ_n̄ = 1` inserted.
    pub fn full(&self, target: usize) -> Vec<f64> {
        let mut out = self.xi.clone();
        out.insert(target, 1.0);
        out
    }

    /// Inverse of [`XiCoords::full`]: drops the target entry.
    pub fn from_full(full: &[f64], target: usize) -> Self {
        let mut xi = full.to_vec();
        xi.remove(target);
        Self { xi }
    }
}

fn scaled_state(ctx: &FamilyContext, w: &[f64]) -> DensityMatrix {
    let rb = ctx.base.matrix();
    let n = ctx.dim();
    let norm: f64 = (0..n).map(|k| w[k] * w[k] * ctx.weights[k]).sum();
    let m = CMatrix::from_fn(n, n, |a, b| rb[(a, b)] * (w[a] * w[b] / norm));
    DensityMatrix::from_raw(linalg::hermitize(&m))
}

/// `ρ̌_θ` without any rescaling.
pub fn unnormalized_from_theta(ctx: &FamilyContext, th: &ThetaCoords) -> CMatrix {
    let w: Vec<f64> = th.values().iter().map(|t| (0.5 * t).exp()).collect();
    let rb = ctx.base.matrix();
    let n = ctx.dim();
    CMatrix::from_fn(n, n, |a, b| rb[(a, b)] * (w[a] * w[b]))
}

/// `ρ_θ = ρ̌_θ / Tr(ρ̌_θ)`, computed with the largest `θ_k` subtracted first.
pub fn rho_from_theta(ctx: &FamilyContext, th: &ThetaCoords) -> DensityMatrix {
    let max = th
        .values()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = th
        .values()
        .iter()
        .map(|t| (0.5 * (t - max)).exp())
        .collect();
    scaled_state(ctx, &w)
}

/// `ρ_ξ = W ρ̄₀ W / Σ_k ξ_k² Tr(ρ̄₀ A_k)` with `W = diag(ξ)`, `ξ_n̄ = 1`.
pub fn rho_from_xi(ctx: &FamilyContext, x: &XiCoords) -> DensityMatrix {
    let full = x.full(ctx.target);
    let scale = full.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let w: Vec<f64> = full.iter().map(|v| v / scale).collect();
    scaled_state(ctx, &w)
}

pub fn theta_to_xi(th: &ThetaCoords, target: usize) -> XiCoords {
    let t = th.values();
    let xi = (0..t.len())
        .filter(|&k| k != target)
        .map(|k| (0.5 * (t[k] - t[target])).exp())
        .collect();
    XiCoords { xi }
}

/// `θ_k = 2 log ξ_k`, `θ_n̄ = 0`. Requires `ξ > 0`.
pub fn xi_to_theta(x: &XiCoords, target: usize) -> Result<ThetaCoords> {
    if let Some(v) = x.values().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "xi must be positive to map to theta, got {v}"
        )));
    }
    let theta = x.full(target).iter().map(|v| 2.0 * v.ln()).collect();
    Ok(ThetaCoords { theta })
}

/// Recovers `θ` (normalized so that `θ_n̄ = 0`) from a state on the family.
/// Only the populations are read.
pub fn theta_from_rho(ctx: &FamilyContext, rho: &DensityMatrix) -> Result<ThetaCoords> {
    let n = ctx.dim();
    let t = ctx.target;
    let pt = rho.population(t) / ctx.weights[t];
    let mut theta = Vec::with_capacity(n);
    for k in 0..n {
        let r = (rho.population(k) / ctx.weights[k]) / pt;
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!(
                "population {k} is not positive; state is off the family interior"
            )));
        }
        theta.push(r.ln());
    }
    Ok(ThetaCoords { theta })
}

/// `ξ_k = √((ρ_kk / q_k) / (ρ_n̄n̄ / q_n̄))` for a state on the family.
pub fn xi_from_rho(ctx: &FamilyContext, rho: &DensityMatrix) -> Result<XiCoords> {
    let t = ctx.target;
    let pt = rho.population(t) / ctx.weights[t];
    if !(pt > 0.0) {
        return Err(Error::Domain(
            "target population vanishes; xi is unbounded".into(),
        ));
    }
    let xi = (0..ctx.dim())
        .filter(|&k| k != t)
        .map(|k| ((rho.population(k).max(0.0) / ctx.weights[k]) / pt).sqrt())
        .collect();
    Ok(XiCoords { xi })
}

/// `E_k = Tr(i ρ [H, A_k])` for an arbitrary Hermitian `ρ` and
/// `H = ω J_z + u J_y`. The `J_z` part never contributes.
fn flux(model: &SystemModel, rho: &CMatrix, u: f64) -> Vec<f64> {
    let n = model.dim();
    let h = model.hamiltonian(u);
    (0..n)
        .map(|k| {
            let mut acc = C64::new(0.0, 0.0);
            for p in 0..n {
                acc += rho[(k, p)] * h[(p, k)] - h[(k, p)] * rho[(p, k)];
            }
            (I * acc).re
        })
        .collect()
}

/// Fisher matrix `G = diag(e^{θ_k} Tr(ρ̄₀A_k))` and `E_k = Tr(iρ̌_θ[H, A_k])`.
pub fn fisher_and_drift(
    ctx: &FamilyContext,
    th: &ThetaCoords,
    u: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let g = DVector::from_iterator(
        ctx.dim(),
        th.values()
            .iter()
            .zip(&ctx.weights)
            .map(|(t, q)| t.exp() * q),
    );
    let e = flux(&ctx.model, &unnormalized_from_theta(ctx, th), u);
    (DMatrix::from_diagonal(&g), DVector::from_vec(e))
}

/// `G⁻¹E`, evaluated on the normalized state so that it is safe for any
/// finite `θ`. The ratio is invariant under rescaling of `ρ̌_θ`.
pub fn natural_drift(ctx: &FamilyContext, rho: &DensityMatrix, u: f64) -> Vec<f64> {
    if u == 0.0 {
        return vec![0.0; ctx.dim()];
    }
    let e = flux(&ctx.model, rho.matrix(), u);
    e.iter()
        .enumerate()
        .map(|(k, ek)| ek / rho.population(k))
        .collect()
}

/// Tangent vectors `∂̌_k = ½(A_kρ̌_θ + ρ̌_θA_k)`.
pub fn tangent_basis(ctx: &FamilyContext, th: &ThetaCoords) -> Vec<CMatrix> {
    let rc = unnormalized_from_theta(ctx, th);
    ctx.model
        .projectors()
        .iter()
        .map(|a| (a * &rc + &rc * a) * C64::new(0.5, 0.0))
        .collect()
}

/// `Π_θ(ν) = Σ_{k,j} g^{kj} Tr(ν A_j) ∂̌_k` with the Fisher metric
/// `g_kj = Tr(ρ̌_θ A_k A_j)`.
pub fn project_tangent(ctx: &FamilyContext, th: &ThetaCoords, nu: &CMatrix) -> Result<CMatrix> {
    let n = ctx.dim();
    check_square(nu, n)?;
    let rc = unnormalized_from_theta(ctx, th);
    let a = ctx.model.projectors();
    let g = DMatrix::from_fn(n, n, |k, j| linalg::trace_product(&rc, &(&a[k] * &a[j])));
    let ginv = g.try_inverse().ok_or_else(|| {
        let level = (0..n).find(|&k| rc[(k, k)].re <= 0.0).unwrap_or(0);
        Error::SingularFamily { level }
    })?;
    let pair = DVector::from_iterator(n, a.iter().map(|aj| linalg::trace_product(nu, aj)));
    let c = ginv * pair;
    let basis = tangent_basis(ctx, th);
    let mut out = linalg::zeros(n);
    for k in 0..n {
        out += &basis[k] * C64::new(c[k], 0.0);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;
    use crate::quantum::{build_system, bures_distance};

    pub(crate) fn reference_context(target: usize) -> FamilyContext {
        let model = build_system(4, 0.5, 1.0).unwrap();
        FamilyContext::new(crate::presets::reference_base_state(), model, target).unwrap()
    }

    #[test]
    fn theta_zero_is_base_state() {
        let ctx = reference_context(0);
        let rho = rho_from_theta(&ctx, &ThetaCoords::zeros(4));
        assert!(frobenius(&(rho.matrix() - ctx.base().matrix())) < 1e-15);
    }

    #[test]
    fn constant_shift_is_redundant() {
        let ctx = reference_context(0);
        let th = ThetaCoords::new(vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        for mu in [-800.0, -3.0, 5.0, 900.0] {
            let a = rho_from_theta(&ctx, &th);
            let b = rho_from_theta(&ctx, &th.shifted(mu));
            assert!(frobenius(&(a.matrix() - b.matrix())) < 1e-13);
        }
    }

    #[test]
    fn large_theta_limit() {
        let ctx = reference_context(0);
        let th = ThetaCoords::new(vec![20.0, 0.0, 0.0, 0.0]).unwrap();
        let rho = rho_from_theta(&ctx, &th);
        let d = bures_distance(&rho, &DensityMatrix::basis_state(4, 0)).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn xi_zero_is_target() {
        let ctx = reference_context(0);
        let rho = rho_from_xi(&ctx, &XiCoords::zeros(3));
        assert_eq!(rho.matrix(), DensityMatrix::basis_state(4, 0).matrix());
    }

    #[test]
    fn large_xi_limit() {
        let ctx = reference_context(0);
        let rho = rho_from_xi(&ctx, &XiCoords::new(vec![1e3, 0.0, 0.0]).unwrap());
        let d = bures_distance(&rho, &DensityMatrix::basis_state(4, 1)).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn charts_agree() {
        for target in 0..4 {
            let ctx = reference_context(target);
            let th = ThetaCoords::new(vec![0.4, -0.7, 1.3, 0.2]).unwrap();
            let a = rho_from_theta(&ctx, &th);
            let b = rho_from_xi(&ctx, &theta_to_xi(&th, target));
            assert!(frobenius(&(a.matrix() - b.matrix())) < 1e-12);
            let xi = xi_from_rho(&ctx, &a).unwrap();
            assert!(xi
                .values()
                .iter()
                .zip(theta_to_xi(&th, target).values())
                .all(|(x, y)| (x - y).abs() < 1e-12));
        }
    }

    #[test]
    fn theta_to_xi_examples() {
        assert_eq!(
            theta_to_xi(&ThetaCoords::zeros(4), 0).values(),
            &[1.0, 1.0, 1.0]
        );
        let th = ThetaCoords::new(vec![0.0, 2.0, 0.0, 0.0]).unwrap();
        let xi = theta_to_xi(&th, 0);
        assert!((xi.values()[0] - 1f64.exp()).abs() < 1e-15);
        assert_eq!(&xi.values()[1..], &[1.0, 1.0]);
        assert_eq!(theta_to_xi(&th.shifted(3.5), 0).values(), xi.values());
    }

    #[test]
    fn fisher_at_origin() {
        let ctx = reference_context(0);
        let (g, e) = fisher_and_drift(&ctx, &ThetaCoords::zeros(4), 0.0);
        let expect = [0.2, 0.2, 0.3, 0.3];
        for k in 0..4 {
            assert!((g[(k, k)] - expect[k]).abs() < 1e-15);
            assert_eq!(e[k], 0.0);
        }
        assert_eq!(g[(0, 1)], 0.0);
    }

    #[test]
    fn flux_matches_dense_trace() {
        let model = build_system(4, 0.5, 1.0).unwrap();
        let base = crate::sampling::random_density(4, 9);
        let ctx = FamilyContext::new(base, model, 1).unwrap();
        let th = ThetaCoords::new(vec![0.5, -0.2, 0.9, -1.1]).unwrap();
        let (_, e) = fisher_and_drift(&ctx, &th, 1.0);
        let rc = unnormalized_from_theta(&ctx, &th);
        for k in 0..4 {
            let a = ctx.model().projector(k);
            let dense = (&rc * crate::linalg::commutator(ctx.model().jy(), a) * I).trace();
            assert!((dense.re - e[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_vectors_are_fixed() {
        let ctx = reference_context(0);
        let th = ThetaCoords::new(vec![0.1, 0.2, -0.3, 0.4]).unwrap();
        for v in tangent_basis(&ctx, &th) {
            let p = project_tangent(&ctx, &th, &v).unwrap();
            assert!(frobenius(&(p - &v)) < 1e-12);
        }
    }

    #[test]
    fn measurement_field_is_tangent() {
        let ctx = reference_context(2);
        let th = ThetaCoords::new(vec![-0.1, 0.7, 0.3, -0.4]).unwrap();
        let rc = unnormalized_from_theta(&ctx, &th);
        let l = ctx.model().jz();
        let nu = (l * &rc + &rc * l) * C64::new(0.5f64.sqrt(), 0.0);
        let p = project_tangent(&ctx, &th, &nu).unwrap();
        assert!(frobenius(&(p - nu)) < 1e-12);
    }

    #[test]
    fn projected_stratonovich_dissipator() {
        let ctx = reference_context(0);
        let th = ThetaCoords::new(vec![0.3, -0.2, 0.5, 0.0]).unwrap();
        let rc = unnormalized_from_theta(&ctx, &th);
        let l = ctx.model().jz();
        let fhat = crate::quantum::superop_fhat(&rc, l, 0.5).unwrap();
        let p = project_tangent(&ctx, &th, &fhat).unwrap();
        let l2 = l * l;
        let expect = -(&l2 * &rc + &rc * &l2) * C64::new(0.5, 0.0);
        assert!(frobenius(&(p - expect)) < 1e-12);
    }

    #[test]
    fn zero_population_is_rejected() {
        let model = build_system(4, 0.5, 1.0).unwrap();
        let base = DensityMatrix::from_populations(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!(matches!(
            FamilyContext::new(base, model, 0),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn reference_base_state_does_not_couple_to_control() {
        for target in 0..4 {
            let ctx = reference_context(target);
            assert!(ctx.is_commuting());
            assert!(ctx.is_control_blind());
        }
    }

    #[test]
    fn coupling_matches_dense_oracle() {
        let model = build_system(5, 0.5, 1.0).unwrap();
        let base = crate::sampling::random_density(5, 4);
        let ctx = FamilyContext::new(base.clone(), model.clone(), 2).unwrap();
        for k in 0..5 {
            for p in 0..5 {
                // -2 Im(ρ̄₀[p,k] J_y[k,p]) / (2 q_k)
                let z = base.matrix()[(p, k)] * model.jy()[(k, p)];
                let oracle = if k == p {
                    0.0
                } else {
                    -z.im / base.population(k)
                };
                assert!((ctx.coupling(k, p) - oracle).abs() < 1e-14);
            }
        }
    }
}
