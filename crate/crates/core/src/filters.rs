//! One-step updates of the quantum filter, the estimate filter, the Zakai
//! equation, and the projection filter in its three charts, plus the coupled
//! (true filter, companion) stepper.
//!
//! All equations are integrated in Itô form with explicit Euler-Maruyama.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{self, FamilyContext, ThetaCoords, XiCoords};
use crate::linalg::{self, CMatrix, C64};
use crate::quantum::{self, DensityMatrix, SystemModel};
use crate::sde::{euler_step, renormalize};

/// How the observation increment is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `dY = dW + 2√η Tr(J_z ρ) dt` with `ρ` the true filter.
    #[default]
    Physical,
    /// `dY` is itself a Wiener increment; the true filter is not evolved.
    Synthetic,
}

/// Per-step integration settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub dt: f64,
    pub index: usize,
    pub renormalize: bool,
    pub clamp: bool,
}

impl Step {
    pub fn new(dt: f64, index: usize) -> Self {
        Self {
            dt,
            index,
            renormalize: true,
            clamp: true,
        }
    }
}

fn finish(next: CMatrix, step: &Step) -> Result<DensityMatrix> {
    if step.renormalize {
        renormalize(&next, step.clamp).map_err(|e| match e {
            Error::StateCorruption(msg) => {
                Error::StateCorruption(format!("step {}: {msg}", step.index))
            }
            other => other,
        })
    } else {
        Ok(DensityMatrix::from_raw(linalg::hermitize(&next)))
    }
}

/// `dY = dW + 2√η Tr(J_z ρ) dt`.
pub fn observation_increment(rho: &DensityMatrix, dw: f64, model: &SystemModel, dt: f64) -> f64 {
    dw + 2.0 * model.eta().sqrt() * model.mean_jz(rho.matrix()) * dt
}

fn filter_drift(rho: &CMatrix, u: f64, model: &SystemModel) -> CMatrix {
    model.hamiltonian_flow(rho, u) + model.dissipator(rho)
}

/// One step of the quantum filter driven by `dW`. Returns the new state and
/// the observation increment generated along the way.
pub fn step_true(
    rho: &DensityMatrix,
    u: f64,
    dw: f64,
    model: &SystemModel,
    step: &Step,
) -> Result<(DensityMatrix, f64)> {
    let dy = observation_increment(rho, dw, model, step.dt);
    let m = rho.matrix();
    let next = euler_step(
        m,
        &filter_drift(m, u, model),
        &model.backaction(m),
        step.dt,
        dw,
        step.index,
    )?;
    Ok((finish(next, step)?, dy))
}

/// One step of the estimate filter driven by the innovation
/// `dY - 2√η Tr(J_z ρ̂) dt`.
pub fn step_estimate(
    est: &DensityMatrix,
    dy: f64,
    u: f64,
    model: &SystemModel,
    step: &Step,
) -> Result<DensityMatrix> {
    let m = est.matrix();
    let innovation = dy - 2.0 * model.eta().sqrt() * model.mean_jz(m) * step.dt;
    let next = euler_step(
        m,
        &filter_drift(m, u, model),
        &model.backaction(m),
        step.dt,
        innovation,
        step.index,
    )?;
    finish(next, step)
}

/// One step of the linear Zakai equation. The result is not normalized.
pub fn step_zakai(
    unnorm: &CMatrix,
    dy: f64,
    u: f64,
    model: &SystemModel,
    step: &Step,
) -> Result<CMatrix> {
    linalg::check_square(unnorm, model.dim())?;
    let tr = unnorm.trace().re;
    if !(tr > 0.0) {
        return Err(Error::StateCorruption(format!(
            "unnormalized trace {tr} is not positive"
        )));
    }
    let next = euler_step(
        unnorm,
        &filter_drift(unnorm, u, model),
        &model.linear_backaction(unnorm),
        step.dt,
        dy,
        step.index,
    )?;
    let tr = next.trace().re;
    if !(tr > 0.0) {
        return Err(Error::StateCorruption(format!(
            "step {}: unnormalized trace {tr} is not positive",
            step.index
        )));
    }
    Ok(linalg::hermitize(&next))
}

/// `½ Σ_j (A_jρ + ρA_j) Tr(iρ[uJ_y, A_j]) / Tr(ρA_j)`, the projected
/// Hamiltonian field, written elementwise as `½(c_a + c_b) ρ_ab`.
fn projected_flow(proj: &DensityMatrix, u: f64, ctx: &FamilyContext) -> Result<CMatrix> {
    let n = ctx.dim();
    if u == 0.0 {
        return Ok(linalg::zeros(n));
    }
    if let Some(level) = (0..n).find(|&k| proj.population(k) == 0.0) {
        return Err(Error::SingularFamily { level });
    }
    let c = family::natural_drift(ctx, proj, u);
    let m = proj.matrix();
    Ok(CMatrix::from_fn(n, n, |a, b| {
        m[(a, b)] * (0.5 * (c[a] + c[b]))
    }))
}

fn projection_drift_no_coupling(
    proj: &DensityMatrix,
    u: f64,
    ctx: &FamilyContext,
) -> Result<CMatrix> {
    let model = ctx.model();
    Ok(
        projected_flow(proj, u, ctx)?
            + model.dissipator(proj.matrix()) * C64::new(model.eta(), 0.0),
    )
}

/// One step of the coupled projection filter, with the coupling drift
/// `2√η 𝒢(ρ_θ)(Tr(J_zρ) - Tr(J_zρ_θ))` and the shared `dW`.
pub fn step_projection_rho(
    proj: &DensityMatrix,
    rho_true: &DensityMatrix,
    u: f64,
    dw: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<DensityMatrix> {
    let next = projection_increment(proj, rho_true, u, dw, ctx, step)? + proj.matrix();
    finish(next, step)
}

/// Raw Euler increment of [`step_projection_rho`], before renormalization.
pub fn projection_increment(
    proj: &DensityMatrix,
    rho_true: &DensityMatrix,
    u: f64,
    dw: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<CMatrix> {
    let model = ctx.model();
    let g = model.backaction(proj.matrix());
    let gap = model.mean_jz(rho_true.matrix()) - model.mean_jz(proj.matrix());
    let drift = projection_drift_no_coupling(proj, u, ctx)?
        + &g * C64::new(2.0 * model.eta().sqrt() * gap, 0.0);
    let next = euler_step(proj.matrix(), &drift, &g, step.dt, dw, step.index)?;
    Ok(next - proj.matrix())
}

/// One step of the normalized projection filter driven by an observation
/// increment, `𝒢(ρ_θ)(dY - 2√η Tr(J_zρ_θ) dt)`.
pub fn step_projection_observed(
    proj: &DensityMatrix,
    dy: f64,
    u: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<DensityMatrix> {
    let model = ctx.model();
    let m = proj.matrix();
    let innovation = dy - 2.0 * model.eta().sqrt() * model.mean_jz(m) * step.dt;
    let drift = projection_drift_no_coupling(proj, u, ctx)?;
    let next = euler_step(
        m,
        &drift,
        &model.backaction(m),
        step.dt,
        innovation,
        step.index,
    )?;
    finish(next, step)
}

/// One step of `dθ = G⁻¹E dt - 2ηα dt + 2√η β dY`.
pub fn step_theta(
    th: &ThetaCoords,
    dy: f64,
    u: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<ThetaCoords> {
    let model = ctx.model();
    let eta = model.eta();
    let lam = model.eigenvalues();
    let natural = if u == 0.0 {
        vec![0.0; ctx.dim()]
    } else {
        family::natural_drift(ctx, &family::rho_from_theta(ctx, th), u)
    };
    let drift: Vec<f64> = (0..ctx.dim())
        .map(|k| natural[k] - 2.0 * eta * lam[k] * lam[k])
        .collect();
    let diffusion: Vec<f64> = lam.iter().map(|l| 2.0 * eta.sqrt() * l).collect();
    let next = euler_step(
        &th.values().to_vec(),
        &drift,
        &diffusion,
        step.dt,
        dy,
        step.index,
    )?;
    ThetaCoords::new(next)
}

/// Drift of the `ξ` equation without the `Tr(J_z ρ)` coupling term.
fn xi_drift_base(x: &XiCoords, u: f64, ctx: &FamilyContext) -> Vec<f64> {
    let model = ctx.model();
    let eta = model.eta();
    let t = ctx.target();
    let lt = model.eigenvalue(t);
    let full = x.full(t);
    let n = ctx.dim();
    let quad: f64 = if u == 0.0 {
        0.0
    } else {
        (0..n)
            .filter(|&p| p != t)
            .map(|p| ctx.target_coupling(p) * full[p])
            .sum()
    };
    (0..n)
        .filter(|&k| k != t)
        .map(|k| {
            let lk = model.eigenvalue(k);
            let mut d = eta * (1.5 * lt * lt - 0.5 * lk * lk - lk * lt) * full[k];
            if u != 0.0 {
                let lin: f64 = (0..n)
                    .filter(|&p| p != k)
                    .map(|p| ctx.coupling(k, p) * full[p])
                    .sum();
                d += -u * lin + u * quad * full[k];
            }
            d
        })
        .collect()
}

fn xi_diffusion(x: &XiCoords, ctx: &FamilyContext) -> Vec<f64> {
    let model = ctx.model();
    let t = ctx.target();
    let lt = model.eigenvalue(t);
    let s = model.eta().sqrt();
    let full = x.full(t);
    (0..ctx.dim())
        .filter(|&k| k != t)
        .map(|k| s * (model.eigenvalue(k) - lt) * full[k])
        .collect()
}

fn xi_finish(next: Vec<f64>, step: &Step) -> Result<XiCoords> {
    XiCoords::new(next).map_err(|_| Error::BlowUp {
        step: step.index,
        detail: "xi left the finite range".into(),
    })
}

fn xi_euler(
    x: &XiCoords,
    drift: &[f64],
    diffusion: &[f64],
    dw: f64,
    step: &Step,
) -> Result<XiCoords> {
    let next = euler_step(
        &x.values().to_vec(),
        &drift.to_vec(),
        &diffusion.to_vec(),
        step.dt,
        dw,
        step.index,
    )
    .map_err(|_| Error::BlowUp {
        step: step.index,
        detail: format!("xi diverged from |xi| = {:.3e}", x.norm()),
    })?;
    xi_finish(next, step)
}

/// One step of the `ξ` equation driven by the true filter's `Tr(J_z ρ)` and
/// the shared `dW`.
pub fn step_xi(
    x: &XiCoords,
    rho_true: &DensityMatrix,
    u: f64,
    dw: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<XiCoords> {
    let model = ctx.model();
    let t = ctx.target();
    let lt = model.eigenvalue(t);
    let mean = model.mean_jz(rho_true.matrix());
    let eta = model.eta();
    let full = x.full(t);
    let ks: Vec<usize> = (0..ctx.dim()).filter(|&k| k != t).collect();
    let drift: Vec<f64> = xi_drift_base(x, u, ctx)
        .into_iter()
        .zip(&ks)
        .map(|(d, &k)| d + 2.0 * eta * (model.eigenvalue(k) - lt) * mean * full[k])
        .collect();
    xi_euler(x, &drift, &xi_diffusion(x, ctx), dw, step)
}

/// The `ξ` equation with `dW + 2√η Tr(J_zρ) dt` replaced by `dY`.
pub fn step_xi_observed(
    x: &XiCoords,
    dy: f64,
    u: f64,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<XiCoords> {
    xi_euler(
        x,
        &xi_drift_base(x, u, ctx),
        &xi_diffusion(x, ctx),
        dy,
        step,
    )
}

/// Increment of `Tr(ρ_θ A_n)` over one step as derived from the coupled
/// projection filter:
/// `-uΘ_n dt + 4η P_n Tr(ρ_θA_n) 𝒯 dt + 2√η P_n Tr(ρ_θA_n) dW`.
pub fn diag_increment_oracle(
    proj: &DensityMatrix,
    rho_true: &DensityMatrix,
    u: f64,
    dw: f64,
    model: &SystemModel,
    n: usize,
    dt: f64,
) -> f64 {
    let eta = model.eta();
    let p = proj.population(n);
    let pn = quantum::level_gap(proj, model, n);
    let theta = quantum::rotation_flux(proj, model, n);
    let gap = quantum::jz_gap(rho_true, proj, model);
    -u * theta * dt + 4.0 * eta * pn * p * gap * dt + 2.0 * eta.sqrt() * pn * p * dw
}

/// The same increment with the coefficients exactly as printed in the
/// source: `P_n̄` in the drift and `4√η` in the diffusion.
pub fn diag_increment_as_printed(
    proj: &DensityMatrix,
    rho_true: &DensityMatrix,
    u: f64,
    dw: f64,
    ctx: &FamilyContext,
    n: usize,
    dt: f64,
) -> f64 {
    let model = ctx.model();
    let eta = model.eta();
    let p = proj.population(n);
    let pt = quantum::level_gap(proj, model, ctx.target());
    let pn = quantum::level_gap(proj, model, n);
    let theta = quantum::rotation_flux(proj, model, n);
    let gap = quantum::jz_gap(rho_true, proj, model);
    -u * theta * dt + 4.0 * eta * pt * p * gap * dt + 4.0 * eta.sqrt() * pn * p * dw
}

/// Which filter runs alongside the true filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompanionKind {
    Estimate,
    #[default]
    Projection,
    Theta,
    Xi,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Companion {
    Estimate(DensityMatrix),
    Projection(DensityMatrix),
    Theta(ThetaCoords),
    Xi(XiCoords),
}

impl Companion {
    pub fn kind(&self) -> CompanionKind {
        match self {
            Companion::Estimate(_) => CompanionKind::Estimate,
            Companion::Projection(_) => CompanionKind::Projection,
            Companion::Theta(_) => CompanionKind::Theta,
            Companion::Xi(_) => CompanionKind::Xi,
        }
    }

    /// Density matrix represented by the companion.
    pub fn state(&self, ctx: &FamilyContext) -> DensityMatrix {
        match self {
            Companion::Estimate(r) | Companion::Projection(r) => r.clone(),
            Companion::Theta(th) => family::rho_from_theta(ctx, th),
            Companion::Xi(x) => family::rho_from_xi(ctx, x),
        }
    }

    /// `ξ` coordinates of the companion, when it lies on the family.
    pub fn xi(&self, ctx: &FamilyContext) -> Result<XiCoords> {
        match self {
            Companion::Xi(x) => Ok(x.clone()),
            Companion::Theta(th) => Ok(family::theta_to_xi(th, ctx.target())),
            Companion::Projection(r) | Companion::Estimate(r) => family::xi_from_rho(ctx, r),
        }
    }
}

/// True filter, companion, time and the last applied control.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledState {
    pub rho: DensityMatrix,
    pub companion: Companion,
    pub time: f64,
    pub u: f64,
}

fn tag(e: Error, which: &str) -> Error {
    match e {
        Error::StateCorruption(msg) => Error::StateCorruption(format!("{which}: {msg}")),
        other => other,
    }
}

/// Advances the pair by one step with the control `u` held over the step.
/// In physical mode the same `dw` drives both filters; in synthetic mode
/// `dw` is used as the observation increment and `rho` is left untouched.
/// Returns the observation increment.
pub fn step_coupled(
    state: &mut CoupledState,
    u: f64,
    dw: f64,
    mode: NoiseMode,
    ctx: &FamilyContext,
    step: &Step,
) -> Result<f64> {
    let model = ctx.model();
    let (rho_next, dy) = match mode {
        NoiseMode::Physical => {
            let (r, dy) =
                step_true(&state.rho, u, dw, model, step).map_err(|e| tag(e, "quantum filter"))?;
            (Some(r), dy)
        }
        NoiseMode::Synthetic => (None, dw),
    };
    let companion = (|| -> Result<Companion> {
        Ok(match (&state.companion, mode) {
            (Companion::Estimate(e), _) => {
                Companion::Estimate(step_estimate(e, dy, u, model, step)?)
            }
            (Companion::Projection(p), NoiseMode::Physical) => {
                Companion::Projection(step_projection_rho(p, &state.rho, u, dw, ctx, step)?)
            }
            (Companion::Projection(p), NoiseMode::Synthetic) => {
                Companion::Projection(step_projection_observed(p, dy, u, ctx, step)?)
            }
            (Companion::Theta(th), _) => Companion::Theta(step_theta(th, dy, u, ctx, step)?),
            (Companion::Xi(x), NoiseMode::Physical) => {
                Companion::Xi(step_xi(x, &state.rho, u, dw, ctx, step)?)
            }
            (Companion::Xi(x), NoiseMode::Synthetic) => {
                Companion::Xi(step_xi_observed(x, dy, u, ctx, step)?)
            }
        })
    })()
    .map_err(|e| tag(e, "companion"))?;
    if let Some(r) = rho_next {
        state.rho = r;
    }
    state.companion = companion;
    state.time += step.dt;
    state.u = u;
    Ok(dy)
}
