//! Feedback laws evaluated on the projection filter, and Monte-Carlo spot
//! checks of the hypotheses they are meant to satisfy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{self, FamilyContext, XiCoords};
use crate::filters::Companion;
use crate::quantum::{self, DensityMatrix};
use crate::sampling;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// `α (1 - Tr(ρ_θ A_n̄))^β`.
    RhoThetaPower,
    /// `α ‖ξ‖^β / (1 + ‖ξ‖^β)`.
    XiEdge,
    /// `S(ξ)^β f(ξ) / (1 + ‖ξ‖^{2β})`.
    XiInterior,
    /// `-α ‖ξ‖^β / (1 + ‖ξ‖^{β+1}) Σ_p b_p ξ_p`.
    XiEdgeGeneral,
    /// `-S(ξ)^β f(ξ) / (1 + ‖ξ‖^{2β+1}) Σ_p b_p ξ_p`.
    XiInteriorGeneral,
    #[default]
    Zero,
}

impl ControllerKind {
    pub fn is_xi(self) -> bool {
        matches!(
            self,
            ControllerKind::XiEdge
                | ControllerKind::XiInterior
                | ControllerKind::XiEdgeGeneral
                | ControllerKind::XiInteriorGeneral
        )
    }

    pub fn is_edge(self) -> bool {
        matches!(self, ControllerKind::XiEdge | ControllerKind::XiEdgeGeneral)
    }

    pub fn is_interior(self) -> bool {
        matches!(
            self,
            ControllerKind::XiInterior | ControllerKind::XiInteriorGeneral
        )
    }
}

/// Controller family and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    #[serde(alias = "alpha_gain")]
    pub alpha: f64,
    #[serde(alias = "beta_exp")]
    pub beta: f64,
    /// Radius `ε` of the ball on which interior laws must vanish.
    pub bump_radius: f64,
    /// Offset `c` of the bump `f(ξ) = max(0, (‖ξ‖-c)³ / (1+‖ξ‖³))`.
    pub bump_offset: f64,
    pub target: usize,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self {
            kind: ControllerKind::Zero,
            alpha: 1.0,
            beta: 1.0,
            bump_radius: 1.0,
            bump_offset: 1.0,
            target: 0,
        }
    }
}

impl ControllerSpec {
    pub fn zero(target: usize) -> Self {
        Self {
            target,
            ..Self::default()
        }
    }

    pub fn rho_theta_power(alpha: f64, beta: f64, target: usize) -> Self {
        Self {
            kind: ControllerKind::RhoThetaPower,
            alpha,
            beta,
            target,
            ..Self::default()
        }
    }

    pub fn xi_edge(alpha: f64, beta: f64, target: usize) -> Self {
        Self {
            kind: ControllerKind::XiEdge,
            alpha,
            beta,
            target,
            ..Self::default()
        }
    }

    pub fn xi_edge_general(alpha: f64, beta: f64, target: usize) -> Self {
        Self {
            kind: ControllerKind::XiEdgeGeneral,
            ..Self::xi_edge(alpha, beta, target)
        }
    }

    pub fn xi_interior(beta: f64, offset: f64, target: usize) -> Self {
        Self {
            kind: ControllerKind::XiInterior,
            beta,
            bump_offset: offset,
            bump_radius: offset,
            target,
            ..Self::default()
        }
    }

    pub fn xi_interior_general(beta: f64, offset: f64, target: usize) -> Self {
        Self {
            kind: ControllerKind::XiInteriorGeneral,
            ..Self::xi_interior(beta, offset, target)
        }
    }

    pub fn bump(&self) -> BumpFunction {
        BumpFunction {
            offset: self.bump_offset,
        }
    }

    /// Checks the parameter ranges and that the law matches the target.
    pub fn validate(&self, levels: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfiguration(msg));
        if self.target >= levels {
            return bad(format!("target {} out of range 0..{levels}", self.target));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 1.0) || !self.beta.is_finite() {
            return bad(format!("beta must be at least 1, got {}", self.beta));
        }
        if !(self.bump_offset > 0.0) || !(self.bump_radius > 0.0) {
            return bad("bump_offset and bump_radius must be positive".into());
        }
        if self.bump_radius > self.bump_offset {
            return bad(format!(
                "bump_radius {} exceeds bump_offset {}; the bump only vanishes on the ball of radius bump_offset",
                self.bump_radius, self.bump_offset
            ));
        }
        let edge = self.target == 0 || self.target + 1 == levels;
        if self.kind.is_edge() && !edge {
            return bad(format!(
                "{:?} needs an extremal target (0 or {}), got {}",
                self.kind,
                levels - 1,
                self.target
            ));
        }
        if self.kind.is_interior() && edge {
            return bad(format!(
                "{:?} needs a non-extremal target, got {}",
                self.kind, self.target
            ));
        }
        Ok(())
    }
}

/// `f(ξ) = max(0, (‖ξ‖ - c)³ / (1 + ‖ξ‖³))`. Vanishes on the ball of radius
/// `c`, is `C¹`, and is bounded by one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BumpFunction {
    pub offset: f64,
}

impl BumpFunction {
    pub fn eval(&self, norm: f64) -> f64 {
        if norm <= self.offset {
            return 0.0;
        }
        (norm - self.offset).powi(3) / (1.0 + norm.powi(3))
    }
}

/// `sign(x) |x|^β`, which equals `x^β` whenever the latter is real.
fn signed_pow(x: f64, beta: f64) -> f64 {
    if beta.fract() == 0.0 && beta.abs() < 64.0 {
        x.powi(beta as i32)
    } else {
        x.signum() * x.abs().powf(beta)
    }
}

/// `α (1 - Tr(ρ_θ A_n̄))^β`.
pub fn control_rho_theta(proj: &DensityMatrix, spec: &ControllerSpec) -> f64 {
    let gap = (1.0 - proj.population(spec.target)).max(0.0);
    spec.alpha * gap.powf(spec.beta)
}

/// `S(ξ) = Σ_{k≠n̄} (λ_n̄ - λ_k) ξ_k² Tr(A_k ρ̄₀)`.
pub fn interior_surface(x: &XiCoords, ctx: &FamilyContext) -> f64 {
    let full = x.full(ctx.target());
    (0..ctx.dim())
        .filter(|&k| k != ctx.target())
        .map(|k| ctx.interior_weight(k) * full[k] * full[k])
        .sum()
}

/// `Σ_{p≠n̄} Tr(iJ_y(A_pρ̄₀A_n̄ - A_n̄ρ̄₀A_p)) / (2Tr(ρ̄₀A_n̄)) ξ_p`.
pub fn drive_form(x: &XiCoords, ctx: &FamilyContext) -> f64 {
    let full = x.full(ctx.target());
    (0..ctx.dim())
        .filter(|&p| p != ctx.target())
        .map(|p| ctx.target_coupling(p) * full[p])
        .sum()
}

/// Evaluates one of the `ξ` laws.
pub fn control_xi(x: &XiCoords, ctx: &FamilyContext, spec: &ControllerSpec) -> Result<f64> {
    if spec.target != ctx.target() {
        return Err(Error::InvalidConfiguration(format!(
            "controller target {} differs from family target {}",
            spec.target,
            ctx.target()
        )));
    }
    spec.validate(ctx.dim())?;
    let norm = x.norm();
    let b = spec.beta;
    let u = match spec.kind {
        ControllerKind::XiEdge => {
            let s = norm.powf(b);
            spec.alpha * s / (1.0 + s)
        }
        ControllerKind::XiEdgeGeneral => {
            -spec.alpha * norm.powf(b) / (1.0 + norm.powf(b + 1.0)) * drive_form(x, ctx)
        }
        ControllerKind::XiInterior => {
            let f = spec.bump().eval(norm);
            if f == 0.0 {
                0.0
            } else {
                signed_pow(interior_surface(x, ctx), b) * f / (1.0 + norm.powf(2.0 * b))
            }
        }
        ControllerKind::XiInteriorGeneral => {
            let f = spec.bump().eval(norm);
            if f == 0.0 {
                0.0
            } else {
                -signed_pow(interior_surface(x, ctx), b) * f / (1.0 + norm.powf(2.0 * b + 1.0))
                    * drive_form(x, ctx)
            }
        }
        ControllerKind::RhoThetaPower | ControllerKind::Zero => {
            return Err(Error::InvalidConfiguration(format!(
                "{:?} is not a xi law",
                spec.kind
            )))
        }
    };
    Ok(u)
}

/// Control computed from whatever companion filter is running.
pub fn evaluate(spec: &ControllerSpec, companion: &Companion, ctx: &FamilyContext) -> Result<f64> {
    match spec.kind {
        ControllerKind::Zero => Ok(0.0),
        ControllerKind::RhoThetaPower => Ok(control_rho_theta(&companion.state(ctx), spec)),
        _ => control_xi(&companion.xi(ctx)?, ctx, spec),
    }
}

/// One assumption checked on samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub name: String,
    /// Whether the stability theorem for this controller and target uses it.
    pub required: bool,
    pub passed: bool,
    pub samples: usize,
    pub detail: String,
    pub witnesses: Vec<String>,
    pub fitted_constant: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub controller: ControllerKind,
    pub target: usize,
    pub edge: bool,
    pub checks: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn check(&self, name: &str) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// True when every required check passed.
    pub fn required_pass(&self) -> bool {
        self.checks.iter().filter(|c| c.required).all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "controller {:?}, target {} ({})\n",
            self.controller,
            self.target,
            if self.edge { "extremal" } else { "interior" }
        );
        for c in &self.checks {
            let status = if c.passed { "ok" } else { "VIOLATED" };
            let req = if c.required {
                "required"
            } else {
                "informational"
            };
            out.push_str(&format!(
                "  {:<4} {:<9} [{req}] {} ({} samples)\n",
                c.name, status, c.detail, c.samples
            ));
            for w in c.witnesses.iter().take(3) {
                out.push_str(&format!("         witness: {w}\n"));
            }
        }
        out
    }
}

const MAX_WITNESSES: usize = 5;

struct Audit<'a> {
    spec: &'a ControllerSpec,
    ctx: &'a FamilyContext,
}

impl Audit<'_> {
    fn u_state(&self, rho: &DensityMatrix) -> Result<f64> {
        evaluate(self.spec, &Companion::Projection(rho.clone()), self.ctx)
    }

    fn u_xi(&self, x: &XiCoords) -> Result<f64> {
        evaluate(self.spec, &Companion::Xi(x.clone()), self.ctx)
    }

    fn len(&self) -> usize {
        self.ctx.xi_len()
    }

    fn axis(&self, j: usize, scale: f64) -> XiCoords {
        let mut v = vec![0.0; self.len()];
        v[j] = scale;
        XiCoords::new(v).expect("finite")
    }

    /// Random `ξ` with norm drawn log-uniformly from `[lo, hi]`; signs are
    /// kept positive to stay in the image of the `θ` chart.
    fn random_xi<R: Rng>(&self, rng: &mut R, lo: f64, hi: f64) -> XiCoords {
        let dir: Vec<f64> = sampling::gaussian_vector(rng, self.len())
            .into_iter()
            .map(f64::abs)
            .collect();
        let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let r = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        XiCoords::new(dir.iter().map(|x| x / n * r).collect()).expect("finite")
    }

    /// A point of `{S(ξ) = 0} \ {0}`, the image of `P_n̄ = 0` in the `ξ` chart.
    fn surface_xi<R: Rng>(&self, rng: &mut R) -> Option<XiCoords> {
        let t = self.ctx.target();
        let mut full: Vec<f64> = sampling::gaussian_vector(rng, self.ctx.dim())
            .into_iter()
            .map(f64::abs)
            .collect();
        full[t] = 1.0;
        let above: f64 = (0..t)
            .map(|k| self.ctx.interior_weight(k) * full[k] * full[k])
            .sum();
        let below: f64 = (t + 1..self.ctx.dim())
            .map(|k| self.ctx.interior_weight(k) * full[k] * full[k])
            .sum();
        if !(above < 0.0 && below > 0.0) {
            return None;
        }
        let gamma = (-above / below).sqrt();
        for v in full.iter_mut().skip(t + 1) {
            *v *= gamma;
        }
        let mut x = XiCoords::from_full(&full, t);
        let r = (rng.random::<f64>() * 8.0 - 4.0).exp();
        for v in x.values_mut() {
            *v *= r;
        }
        Some(x)
    }

    fn a4_margin(&self, rho: &DensityMatrix, u: f64) -> f64 {
        let model = self.ctx.model();
        let t = self.ctx.target();
        2.0 * model.eta() * quantum::variance_z(rho, model) * rho.population(t)
            - u * quantum::rotation_flux(rho, model, t)
    }
}

fn check(name: &str, required: bool) -> AssumptionCheck {
    AssumptionCheck {
        name: name.into(),
        required,
        passed: true,
        samples: 0,
        detail: String::new(),
        witnesses: Vec::new(),
        fitted_constant: None,
    }
}

fn fail(c: &mut AssumptionCheck, witness: String) {
    c.passed = false;
    if c.witnesses.len() < MAX_WITNESSES {
        c.witnesses.push(witness);
    }
}

/// Spot-checks A1-A4 on states of the family and A1'-A4' on `ξ` vectors.
///
/// Which checks are marked `required` depends on the controller (state laws
/// use the unprimed set, `ξ` laws the primed set) and on whether the target
/// is extremal. Violations are reported, never raised.
pub fn validate_assumptions(
    spec: &ControllerSpec,
    ctx: &FamilyContext,
    sample_count: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    spec.validate(ctx.dim())?;
    if spec.target != ctx.target() {
        return Err(Error::InvalidConfiguration(format!(
            "controller target {} differs from family target {}",
            spec.target,
            ctx.target()
        )));
    }
    let samples = sample_count.max(1);
    let audit = Audit { spec, ctx };
    let t = ctx.target();
    let n = ctx.dim();
    let edge = ctx.model().is_edge(t);
    let primed = spec.kind.is_xi();
    let mut rng = sampling::rng(seed);
    let mut checks = Vec::new();

    // A1: u(A_n̄) = 0 and u(A_k) ≠ 0 elsewhere.
    let mut a1 = check("A1", !primed);
    let target_state = DensityMatrix::basis_state(n, t);
    let u_t = audit.u_state(&target_state)?;
    if u_t != 0.0 {
        fail(&mut a1, format!("u(A_{t}) = {u_t:e}"));
    }
    let mut smallest = f64::INFINITY;
    for k in (0..n).filter(|&k| k != t) {
        // ξ laws cannot read a state with no target population; A_k is then
        // approached along the k-th axis of the ξ chart.
        let u = if primed {
            let j = if k < t { k } else { k - 1 };
            audit.u_xi(&audit.axis(j, 1e6))?
        } else {
            audit.u_state(&DensityMatrix::basis_state(n, k))?
        };
        smallest = smallest.min(u.abs());
        if u == 0.0 {
            fail(&mut a1, format!("u(A_{k}) = 0"));
        }
    }
    a1.samples = n;
    a1.detail = format!("u(A_target) = {u_t:e}, min |u(A_k)| over other levels = {smallest:.3e}");
    checks.push(a1);

    // A2: |u| ≤ c (1 - Tr(ρA_n̄))^p for some p > 1/2, fitted at p = 0.51 and 1.
    let mut a2 = check("A2", !primed && edge);
    let mut c51: f64 = 0.0;
    let mut c1: f64 = 0.0;
    for _ in 0..samples {
        let x = audit.random_xi(&mut rng, 1e-4, 1e2);
        let rho = family::rho_from_xi(ctx, &x);
        let gap = 1.0 - rho.population(t);
        let u = audit.u_state(&rho)?.abs();
        if gap <= 0.0 {
            if u != 0.0 {
                fail(&mut a2, format!("u = {u:e} at the target"));
            }
            continue;
        }
        c51 = c51.max(u / gap.powf(0.51));
        c1 = c1.max(u / gap);
    }
    a2.samples = samples;
    a2.fitted_constant = Some(c51);
    a2.detail = format!("fitted c = {c51:.4e} at p = 0.51, c = {c1:.4e} at p = 1");
    if !c51.is_finite() {
        fail(&mut a2, "no finite constant".into());
    }
    checks.push(a2);

    // A3: u vanishes on a neighbourhood of the target within the family.
    let mut a3 = check("A3", !primed && !edge);
    let mut nonzero = 0;
    for _ in 0..samples {
        let x = audit.random_xi(&mut rng, 1e-6, 1e-2);
        let rho = family::rho_from_xi(ctx, &x);
        let u = audit.u_state(&rho)?;
        if u != 0.0 {
            nonzero += 1;
            fail(&mut a3, format!("u = {u:e} at |xi| = {:.3e}", x.norm()));
        }
    }
    a3.samples = samples;
    a3.detail = format!("{nonzero} nonzero values with |xi| <= 1e-2");
    checks.push(a3);

    // A4 and A4' share the surface P_n̄ = 0, i.e. S(ξ) = 0.
    let mut a4 = check("A4", !primed && !edge);
    let mut a4p = check("A4'", primed && !edge);
    let mut surface = 0;
    let (mut worst, mut worst_p) = (f64::INFINITY, f64::INFINITY);
    if !edge {
        for _ in 0..samples {
            let Some(x) = audit.surface_xi(&mut rng) else {
                continue;
            };
            surface += 1;
            let rho = family::rho_from_xi(ctx, &x);
            let m = audit.a4_margin(&rho, audit.u_state(&rho)?);
            worst = worst.min(m);
            if !(m > 0.0) {
                fail(&mut a4, format!("margin {m:e} at xi = {:?}", x.values()));
            }
            let mp = audit.a4_margin(&rho, audit.u_xi(&x)?);
            worst_p = worst_p.min(mp);
            if !(mp > 0.0) {
                fail(&mut a4p, format!("margin {mp:e} at xi = {:?}", x.values()));
            }
        }
        a4.detail =
            format!("min margin 2 eta V_z p - u Theta = {worst:.3e} on {surface} surface points");
        a4p.detail = format!("min margin = {worst_p:.3e} on {surface} surface points");
    } else {
        a4.detail = "vacuous: P_target = 0 only at the target for an extremal level".into();
        a4p.detail = a4.detail.clone();
    }
    a4.samples = surface;
    a4p.samples = surface;

    // A1': C¹, u(0) = 0, |u| bounded away from zero far along every axis.
    let mut a1p = check("A1'", primed);
    let u0 = audit.u_xi(&XiCoords::zeros(audit.len()))?;
    if u0 != 0.0 {
        fail(&mut a1p, format!("u(0) = {u0:e}"));
    }
    let mut shell = Vec::new();
    for j in 0..audit.len() {
        let mut v = vec![1e-3; audit.len()];
        v[j] = 1e3;
        let u = audit.u_xi(&XiCoords::new(v).expect("finite"))?;
        shell.push(u);
        if u.abs() <= 1e-12 {
            fail(
                &mut a1p,
                format!(
                    "|u| = {:.3e} on the shell |xi| = 1e3 along axis {j}",
                    u.abs()
                ),
            );
        }
    }
    let grad = max_gradient(&audit, &mut rng, samples.min(2000))?;
    if !grad.is_finite() || grad > 1e8 {
        fail(
            &mut a1p,
            format!("finite-difference gradient {grad:e} on |xi| <= 10"),
        );
    }
    a1p.samples = audit.len() + samples.min(2000);
    a1p.detail = format!(
        "u(0) = {u0:e}, shell values {:?}, max finite-difference gradient on |xi| <= 10 = {grad:.3e}",
        shell.iter().map(|u| format!("{u:.3e}")).collect::<Vec<_>>()
    );

    // A2': |u(ξ)| ≤ c max(‖ξ‖^q, 1), fitted at q = 2.
    let mut a2p = check("A2'", primed && edge);
    let mut c2: f64 = 0.0;
    for _ in 0..samples {
        let x = audit.random_xi(&mut rng, 1e-3, 1e3);
        let u = audit.u_xi(&x)?.abs();
        c2 = c2.max(u / x.norm().powi(2).max(1.0));
    }
    a2p.samples = samples;
    a2p.fitted_constant = Some(c2);
    a2p.detail = format!("fitted c = {c2:.4e} at q = 2");
    if !c2.is_finite() {
        fail(&mut a2p, "no finite constant".into());
    }

    // A3': u = 0 on the ball of radius ε.
    let mut a3p = check("A3'", primed && !edge);
    let eps = spec.bump_radius;
    let mut nonzero = 0;
    for _ in 0..samples {
        let x = audit.random_xi(&mut rng, eps * 1e-4, eps);
        let u = audit.u_xi(&x)?;
        if u != 0.0 {
            nonzero += 1;
            fail(&mut a3p, format!("u = {u:e} at |xi| = {:.3e}", x.norm()));
        }
    }
    a3p.samples = samples;
    a3p.detail = format!("{nonzero} nonzero values with |xi| <= {eps}");

    checks.push(a4);
    checks.push(a1p);
    checks.push(a2p);
    checks.push(a3p);
    checks.push(a4p);
    Ok(AssumptionReport {
        controller: spec.kind,
        target: t,
        edge,
        checks,
    })
}

/// Largest central-difference partial derivative of the `ξ` law over random
/// points with `‖ξ‖ ≤ 10`.
fn max_gradient<R: Rng>(audit: &Audit<'_>, rng: &mut R, count: usize) -> Result<f64> {
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let x = audit.random_xi(rng, 1e-2, 10.0);
        for j in 0..audit.len() {
            let mut plus = x.values().to_vec();
            let mut minus = x.values().to_vec();
            plus[j] += h;
            minus[j] -= h;
            let d = (audit.u_xi(&XiCoords::new(plus).expect("finite"))?
                - audit.u_xi(&XiCoords::new(minus).expect("finite"))?)
                / (2.0 * h);
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::quantum::build_system;

    fn ctx(base: DensityMatrix, target: usize) -> FamilyContext {
        FamilyContext::new(base, build_system(4, 0.5, 1.0).unwrap(), target).unwrap()
    }

    #[test]
    fn rho_theta_power_examples() {
        let spec = ControllerSpec::rho_theta_power(10.0, 5.0, 0);
        assert_eq!(
            control_rho_theta(&DensityMatrix::basis_state(4, 0), &spec),
            0.0
        );
        assert_eq!(
            control_rho_theta(&DensityMatrix::basis_state(4, 1), &spec),
            10.0
        );
        let u = control_rho_theta(&DensityMatrix::maximally_mixed(4), &spec);
        assert!((u - 2.373046875).abs() < 1e-12);
    }

    #[test]
    fn every_law_vanishes_at_origin() {
        let specs = [
            (ControllerSpec::xi_edge(10.0, 5.0, 0), 0),
            (ControllerSpec::xi_edge_general(2.0, 2.0, 0), 0),
            (ControllerSpec::xi_interior(2.0, 2.0, 1), 1),
            (ControllerSpec::xi_interior_general(2.0, 2.0, 1), 1),
        ];
        for (spec, t) in specs {
            let c = ctx(presets::coupled_base_state(), t);
            assert_eq!(control_xi(&XiCoords::zeros(3), &c, &spec).unwrap(), 0.0);
        }
    }

    #[test]
    fn edge_general_matches_dense_coefficients() {
        for base in [
            presets::reference_base_state(),
            presets::coupled_base_state(),
        ] {
            let c = ctx(base.clone(), 0);
            let spec = ControllerSpec::xi_edge_general(2.0, 2.0, 0);
            let x = XiCoords::new(vec![0.6, 0.0, 0.8]).unwrap();
            let model = c.model();
            let a0 = model.projector(0);
            let mut sum = 0.0;
            for (j, p) in [1usize, 2, 3].iter().enumerate() {
                let ap = model.projector(*p);
                let m = model.jy()
                    * (ap * base.matrix() * a0 - a0 * base.matrix() * ap)
                    * crate::linalg::I;
                sum += m.trace().re / (2.0 * 0.2) * x.values()[j];
            }
            let want = -2.0 * 0.5 * sum;
            assert!((control_xi(&x, &c, &spec).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_general_is_zero_inside_bump() {
        let c = ctx(presets::coupled_base_state(), 1);
        let spec = ControllerSpec::xi_interior_general(2.0, 2.0, 1);
        let x = XiCoords::new(vec![1.5, 0.0, 0.0]).unwrap();
        assert_eq!(control_xi(&x, &c, &spec).unwrap(), 0.0);
    }

    #[test]
    fn kind_target_mismatch_is_rejected() {
        let c = ctx(presets::coupled_base_state(), 1);
        let spec = ControllerSpec::xi_edge(1.0, 1.0, 1);
        assert!(matches!(
            control_xi(&XiCoords::ones(3), &c, &spec),
            Err(Error::InvalidConfiguration(_))
        ));
        assert!(ControllerSpec::xi_interior(2.0, 2.0, 0)
            .validate(4)
            .is_err());
    }

    #[test]
    fn bump_properties() {
        let f = BumpFunction { offset: 2.0 };
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(2.0), 0.0);
        assert!(f.eval(3.0) > 0.0);
        for r in [2.5, 10.0, 1e3, 1e8] {
            assert!(f.eval(r) <= 1.0);
        }
        // C¹ at the offset: the one-sided slope vanishes.
        assert!(f.eval(2.0 + 1e-5) / 1e-5 < 1e-8);
    }

    #[test]
    fn zero_controller_violates_a1() {
        let c = ctx(presets::reference_base_state(), 0);
        let report = validate_assumptions(&ControllerSpec::zero(0), &c, 200, 1).unwrap();
        assert!(!report.check("A1").unwrap().passed);
    }

    #[test]
    fn figure_one_law_passes_a1_a2() {
        let c = ctx(presets::reference_base_state(), 0);
        let report =
            validate_assumptions(&ControllerSpec::rho_theta_power(10.0, 5.0, 0), &c, 500, 2)
                .unwrap();
        assert!(report.check("A1").unwrap().passed);
        assert!(report.check("A2").unwrap().passed);
        assert!(report.required_pass());
    }

    #[test]
    fn xi_edge_passes_primed_checks() {
        let c = ctx(presets::reference_base_state(), 0);
        let report =
            validate_assumptions(&ControllerSpec::xi_edge(10.0, 5.0, 0), &c, 10_000, 3).unwrap();
        assert!(report.check("A1'").unwrap().passed);
        let a2 = report.check("A2'").unwrap();
        assert!(a2.passed);
        assert!(a2.fitted_constant.unwrap() <= 10.0);
    }

    #[test]
    fn interior_law_vanishes_on_surface() {
        let c = ctx(presets::coupled_base_state(), 1);
        let spec = ControllerSpec::xi_interior(2.0, 2.0, 1);
        let audit = Audit {
            spec: &spec,
            ctx: &c,
        };
        let mut rng = sampling::rng(4);
        let mut seen = 0;
        while seen < 1000 {
            if let Some(x) = audit.surface_xi(&mut rng) {
                assert!(interior_surface(&x, &c).abs() < 1e-9 * x.norm().powi(2).max(1.0));
                assert!(control_xi(&x, &c, &spec).unwrap().abs() < 1e-9);
                seen += 1;
            }
        }
        let report = validate_assumptions(&spec, &c, 1000, 5).unwrap();
        assert!(report.check("A4'").unwrap().passed, "{}", report.render());
        assert!(report.check("A3'").unwrap().passed);
    }

    #[test]
    fn laws_are_bounded_by_their_envelopes() {
        let c = ctx(presets::coupled_base_state(), 0);
        let ci = ctx(presets::coupled_base_state(), 1);
        let b_norm = |c: &FamilyContext| {
            (0..4)
                .filter(|&p| p != c.target())
                .map(|p| c.target_coupling(p).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let edge = ControllerSpec::xi_edge(10.0, 5.0, 0);
        let edge_g = ControllerSpec::xi_edge_general(2.0, 2.0, 0);
        let inter_g = ControllerSpec::xi_interior_general(2.0, 2.0, 1);
        let s_max: f64 = (0..4).map(|k| ci.interior_weight(k).abs()).sum();
        let mut rng = sampling::rng(6);
        let audit = Audit {
            spec: &edge,
            ctx: &c,
        };
        for _ in 0..10_000 {
            let x = audit.random_xi(&mut rng, 1e-3, 1e3);
            let r = x.norm();
            assert!(control_xi(&x, &c, &edge).unwrap().abs() <= 10.0);
            // φ(ξ) = α‖ξ‖^β / (1+‖ξ‖^{β+1}) ≤ Δ / (‖ξ‖ + 1) with Δ = 2α.
            let phi = 2.0 * r.powi(2) / (1.0 + r.powi(3));
            assert!(phi <= 4.0 / (r + 1.0) + 1e-12);
            let u = control_xi(&x, &c, &edge_g).unwrap();
            assert!(u.abs() <= phi * b_norm(&c) * r * (1.0 + 1e-12) + 1e-300);
            // φ(ξ) = |S|^β f / (1+‖ξ‖^{2β+1}) with |S| ≤ s_max ‖ξ‖², f ≤ 1.
            let u = control_xi(&x, &ci, &inter_g).unwrap();
            let phi = s_max.powi(2) * r.powi(4) / (1.0 + r.powi(5));
            assert!(u.abs() <= phi * b_norm(&ci) * r * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn laws_have_bounded_gradients_on_a_grid() {
        let specs = [
            (ControllerSpec::xi_edge(10.0, 5.0, 0), 0),
            (ControllerSpec::xi_edge_general(2.0, 2.0, 0), 0),
            (ControllerSpec::xi_interior(2.0, 2.0, 1), 1),
            (ControllerSpec::xi_interior_general(2.0, 2.0, 1), 1),
        ];
        for (spec, t) in specs {
            let c = ctx(presets::coupled_base_state(), t);
            let h = 1e-6;
            let grid: Vec<f64> = (0..=10).map(|i| -10.0 + 2.0 * i as f64).collect();
            let mut worst: f64 = 0.0;
            for &a in &grid {
                for &b in &grid {
                    for &d in &grid {
                        let v = [a / 1.8, b / 1.8, d / 1.8];
                        for j in 0..3 {
                            let mut p = v;
                            let mut m = v;
                            p[j] += h;
                            m[j] -= h;
                            let up =
                                control_xi(&XiCoords::new(p.to_vec()).unwrap(), &c, &spec).unwrap();
                            let um =
                                control_xi(&XiCoords::new(m.to_vec()).unwrap(), &c, &spec).unwrap();
                            worst = worst.max(((up - um) / (2.0 * h)).abs());
                        }
                    }
                }
            }
            assert!(worst.is_finite() && worst < 1e3, "{spec:?}: {worst}");
        }
    }
}
