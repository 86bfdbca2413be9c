//! Lyapunov functionals, exponent fits, and Monte-Carlo ensembles of the
//! coupled system.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::FamilyContext;
use crate::feedback::{self, ControllerSpec};
use crate::filters::{self, Companion, CoupledState, NoiseMode, Step};
use crate::linalg;
use crate::quantum::{self, DensityMatrix};
use crate::sde::{IntegratorConfig, NoiseStream};

pub const DEFAULT_CONVERGENCE_THRESHOLD: f64 = 0.05;
pub const DEFAULT_EXPONENT_WINDOW: f64 = 0.5;
const EXPONENT_FLOOR: f64 = 1e-300;

/// `½ Σ_{n≠m} √(Tr(ρA_n) Tr(ρA_m))`, zero exactly on the eigenprojectors.
pub fn lyapunov_reduction(proj: &DensityMatrix) -> f64 {
    let roots: Vec<f64> = proj
        .populations()
        .iter()
        .map(|p| p.max(0.0).sqrt())
        .collect();
    let sum: f64 = roots.iter().sum();
    let sq: f64 = roots.iter().map(|r| r * r).sum();
    0.5 * (sum * sum - sq).max(0.0)
}

/// Lyapunov candidate for the pair `(ρ, ρ_θ)` and target `n̄`.
///
/// Extremal target: `√(1 - Tr(ρA_n̄)) + √(1 - Tr(ρ_θA_n̄))`.
/// Otherwise: `Σ_{n≠n̄} √Tr(ρA_n) + Σ_{n≠n̄} √Tr(ρ_θA_n)`.
pub fn lyapunov_target(
    rho: &DensityMatrix,
    proj: &DensityMatrix,
    target: usize,
    edge: bool,
) -> f64 {
    if edge {
        (1.0 - rho.population(target)).max(0.0).sqrt()
            + (1.0 - proj.population(target)).max(0.0).sqrt()
    } else {
        let side = |s: &DensityMatrix| -> f64 {
            (0..s.dim())
                .filter(|&n| n != target)
                .map(|n| s.population(n).max(0.0).sqrt())
                .sum()
        };
        side(rho) + side(proj)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExponentFit {
    pub slope: f64,
    /// Set when the series reached zero and was floored.
    pub floored: bool,
}

/// Least-squares slope of `log(series)` against time over the trailing
/// `window` fraction of the time span.
pub fn sample_exponent(times: &[f64], series: &[f64], window: f64) -> Result<ExponentFit> {
    if times.len() != series.len() {
        return Err(Error::Dimension {
            expected: times.len(),
            rows: series.len(),
            cols: 1,
        });
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Domain(format!(
            "window must lie in (0, 1], got {window}"
        )));
    }
    let mut floored = false;
    let mut end = series.len();
    if let Some(z) = series.iter().position(|&v| v <= 0.0) {
        floored = true;
        end = z + 1;
    }
    if end < 2 {
        return Ok(ExponentFit {
            slope: 0.0,
            floored,
        });
    }
    let (t0, t1) = (times[0], times[end - 1]);
    let start = t1 - window * (t1 - t0);
    let pts: Vec<(f64, f64)> = (0..end)
        .filter(|&i| times[i] >= start - 1e-12 * (t1 - t0).abs())
        .map(|i| (times[i], series[i].max(EXPONENT_FLOOR).ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(ExponentFit {
            slope: 0.0,
            floored,
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y0 = pts[0].1;
    let my = y0 + pts.iter().map(|p| p.1 - y0).sum::<f64>() / n;
    let sxy: f64 = pts
        .iter()
        .map(|p| (p.0 - mt) * ((p.1 - y0) - (my - y0)))
        .sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(ExponentFit { slope, floored })
}

/// Empirical exponent compared with a theoretical bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub empirical_exponent: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl StabilityVerdict {
    pub fn new(empirical_exponent: f64, bound: f64, tolerance: f64) -> Self {
        Self {
            empirical_exponent,
            bound,
            tolerance,
            pass: empirical_exponent <= bound + tolerance,
        }
    }
}

/// Median of the finite entries, `NaN` when there are none.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Everything needed to run a batch of coupled trajectories.
#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub ctx: FamilyContext,
    pub rho0: DensityMatrix,
    pub initial: Companion,
    pub integrator: IntegratorConfig,
    pub controller: ControllerSpec,
    pub mode: NoiseMode,
    pub trajectories: usize,
    pub base_seed: u64,
    /// Record one sample every this many steps.
    pub record_every: usize,
    pub convergence_threshold: f64,
    pub exponent_window: f64,
    /// Keep every recorded sample of every trajectory.
    pub keep_paths: bool,
}

impl EnsembleConfig {
    /// Open-loop defaults: companion started at `ρ̄₀` in the projection chart.
    pub fn new(ctx: FamilyContext, rho0: DensityMatrix) -> Self {
        let target = ctx.target();
        let initial = Companion::Projection(ctx.base().clone());
        Self {
            ctx,
            rho0,
            initial,
            integrator: IntegratorConfig::default(),
            controller: ControllerSpec::zero(target),
            mode: NoiseMode::Physical,
            trajectories: 1,
            base_seed: 0,
            record_every: 1,
            convergence_threshold: DEFAULT_CONVERGENCE_THRESHOLD,
            exponent_window: DEFAULT_EXPONENT_WINDOW,
            keep_paths: false,
        }
    }

    fn validate(&self) -> Result<usize> {
        let steps = self.integrator.steps()?;
        if self.trajectories == 0 {
            return Err(Error::InvalidConfiguration(
                "at least one trajectory is required".into(),
            ));
        }
        if self.record_every == 0 || steps % self.record_every != 0 {
            return Err(Error::InvalidConfiguration(format!(
                "record_every = {} must divide the step count {steps}",
                self.record_every
            )));
        }
        if self.controller.target != self.ctx.target() {
            return Err(Error::InvalidConfiguration(format!(
                "controller target {} differs from family target {}",
                self.controller.target,
                self.ctx.target()
            )));
        }
        self.controller.validate(self.ctx.dim())?;
        if self.rho0.dim() != self.ctx.dim() {
            return Err(Error::Dimension {
                expected: self.ctx.dim(),
                rows: self.rho0.dim(),
                cols: self.rho0.dim(),
            });
        }
        if !(self.exponent_window > 0.0 && self.exponent_window <= 1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "exponent_window must lie in (0, 1], got {}",
                self.exponent_window
            )));
        }
        Ok(steps)
    }
}

/// One recorded point of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sample {
    pub time: f64,
    pub fidelity_to_target: f64,
    pub fidelity_proj: f64,
    pub bures_true: f64,
    pub bures_proj: f64,
    /// Uhlmann fidelity between the true filter and the companion state.
    pub mixed_fidelity: f64,
    pub u: f64,
    pub v_reduction: f64,
    pub v_target: f64,
    pub xi_norm: f64,
}

/// Worst state-hygiene figures seen along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hygiene {
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    /// Steps at which a density matrix failed the PSD probe at `-1e-8`.
    pub psd_violations: usize,
    pub checks: usize,
}

impl Default for Hygiene {
    fn default() -> Self {
        Self {
            max_trace_error: 0.0,
            min_eigenvalue: f64::INFINITY,
            psd_violations: 0,
            checks: 0,
        }
    }
}

impl Hygiene {
    fn observe(&mut self, rho: &DensityMatrix) {
        self.checks += 1;
        let tr = linalg::trace(rho.matrix()).re;
        self.max_trace_error = self.max_trace_error.max((tr - 1.0).abs());
        if !linalg::is_psd_within(rho.matrix(), 1e-8) {
            self.psd_violations += 1;
            self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
        }
    }

    fn observe_exact(&mut self, rho: &DensityMatrix) {
        self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
    }

    pub fn merge(&mut self, other: &Hygiene) {
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
        self.psd_violations += other.psd_violations;
        self.checks += other.checks;
    }

    /// `|Tr ρ - 1| ≤ 1e-10` and no PSD violation at `-1e-8`.
    pub fn clean(&self) -> bool {
        self.max_trace_error <= 1e-10 && self.psd_violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryFailure {
    pub trajectory: usize,
    pub step: usize,
    pub detail: String,
}

/// Result of a single trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryResult {
    pub id: usize,
    pub samples: Vec<Sample>,
    pub final_rho: DensityMatrix,
    pub final_companion: DensityMatrix,
    pub exponent: ExponentFit,
    pub hygiene: Hygiene,
    pub max_xi_norm: f64,
    pub failure: Option<TrajectoryFailure>,
}

fn sample(state: &CoupledState, ctx: &FamilyContext, u: f64, hygiene: &mut Hygiene) -> Sample {
    let t = ctx.target();
    let edge = ctx.model().is_edge(t);
    let proj = state.companion.state(ctx);
    hygiene.observe_exact(&state.rho);
    if matches!(
        state.companion,
        Companion::Estimate(_) | Companion::Projection(_)
    ) {
        hygiene.observe_exact(&proj);
    }
    let xi_norm = state
        .companion
        .xi(ctx)
        .map(|x| x.norm())
        .unwrap_or(f64::INFINITY);
    Sample {
        time: state.time,
        fidelity_to_target: state.rho.population(t),
        fidelity_proj: proj.population(t),
        bures_true: quantum::bures_to_level(&state.rho, t),
        bures_proj: quantum::bures_to_level(&proj, t),
        mixed_fidelity: quantum::fidelity(&state.rho, &proj).unwrap_or(f64::NAN),
        u,
        v_reduction: lyapunov_reduction(&proj),
        v_target: lyapunov_target(&state.rho, &proj, t, edge),
        xi_norm,
    }
}

/// Runs one trajectory. Blow-ups end the trajectory early and are returned
/// in `failure`; configuration problems are errors.
pub fn run_trajectory(cfg: &EnsembleConfig, id: usize, steps: usize) -> TrajectoryResult {
    let ctx = &cfg.ctx;
    let dt = cfg.integrator.dt;
    let mut noise = NoiseStream::for_trajectory(cfg.base_seed, id as u64, dt);
    let mut state = CoupledState {
        rho: cfg.rho0.clone(),
        companion: cfg.initial.clone(),
        time: 0.0,
        u: 0.0,
    };
    let mut hygiene = Hygiene::default();
    let mut samples = Vec::with_capacity(steps / cfg.record_every + 1);
    let mut failure = None;
    let track_xi = matches!(state.companion, Companion::Xi(_) | Companion::Theta(_));
    let check_companion = matches!(
        state.companion,
        Companion::Estimate(_) | Companion::Projection(_)
    );

    let control = |state: &CoupledState| feedback::evaluate(&cfg.controller, &state.companion, ctx);
    let mut u = match control(&state) {
        Ok(u) => u,
        Err(e) => {
            failure = Some(TrajectoryFailure {
                trajectory: id,
                step: 0,
                detail: e.to_string(),
            });
            0.0
        }
    };
    let first = sample(&state, ctx, u, &mut hygiene);
    let mut max_xi = first.xi_norm;
    samples.push(first);

    if failure.is_none() {
        for k in 0..steps {
            let step = Step {
                dt,
                index: k,
                renormalize: cfg.integrator.renormalize,
                clamp: cfg.integrator.clamp_psd,
            };
            let dw = noise.sample_increment();
            let outcome = filters::step_coupled(&mut state, u, dw, cfg.mode, ctx, &step)
                .and_then(|_| control(&state));
            match outcome {
                Ok(next) if next.is_finite() => u = next,
                Ok(next) => {
                    failure = Some(TrajectoryFailure {
                        trajectory: id,
                        step: k,
                        detail: format!("control became {next}"),
                    });
                    break;
                }
                Err(e) => {
                    failure = Some(TrajectoryFailure {
                        trajectory: id,
                        step: k,
                        detail: e.to_string(),
                    });
                    break;
                }
            }
            if cfg.mode == NoiseMode::Physical {
                hygiene.observe(&state.rho);
            }
            if check_companion {
                hygiene.observe(&state.companion.state(ctx));
            }
            if track_xi {
                if let Ok(x) = state.companion.xi(ctx) {
                    max_xi = max_xi.max(x.norm());
                }
            }
            if (k + 1) % cfg.record_every == 0 {
                let s = sample(&state, ctx, u, &mut hygiene);
                max_xi = max_xi.max(s.xi_norm);
                samples.push(s);
            }
        }
    }

    let times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    let dist: Vec<f64> = samples
        .iter()
        .map(|s| match cfg.mode {
            NoiseMode::Physical => s.bures_true,
            NoiseMode::Synthetic => s.bures_proj,
        })
        .collect();
    let exponent = if failure.is_some() {
        ExponentFit {
            slope: f64::NAN,
            floored: false,
        }
    } else {
        sample_exponent(&times, &dist, cfg.exponent_window).unwrap_or(ExponentFit {
            slope: f64::NAN,
            floored: false,
        })
    };
    TrajectoryResult {
        id,
        samples,
        final_companion: state.companion.state(ctx),
        final_rho: state.rho,
        exponent,
        hygiene,
        max_xi_norm: max_xi,
        failure,
    }
}

/// Ensemble aggregates. Vectors are aligned with `time_grid`; means are over
/// trajectories that did not fail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub trajectory_count: usize,
    pub time_grid: Vec<f64>,
    pub mean_fidelity: Vec<f64>,
    pub mean_fidelity_proj: Vec<f64>,
    pub mean_lyapunov_v: Vec<f64>,
    pub mean_lyapunov_target: Vec<f64>,
    pub mean_bures_true: Vec<f64>,
    pub mean_u: Vec<f64>,
    pub convergence_fraction: f64,
    pub exponent_estimates: Vec<f64>,
    /// `Tr(ρ_T A_n̄)` of each trajectory's final state (`NaN` on failure).
    pub final_fidelity: Vec<f64>,
    /// Level whose eigenprojector is within the threshold of each
    /// trajectory's final state, if any.
    pub final_levels: Vec<Option<usize>>,
    pub failures: Vec<TrajectoryFailure>,
    pub hygiene: Hygiene,
    pub max_xi_norm: f64,
    pub convergence_threshold: f64,
    pub levels: usize,
    #[serde(skip)]
    pub paths: Option<Vec<TrajectoryResult>>,
}

impl EnsembleSummary {
    pub fn median_exponent(&self) -> f64 {
        median(&self.exponent_estimates)
    }

    /// Value of a mean series at the grid point closest to `t`.
    pub fn at_time(&self, series: &[f64], t: f64) -> f64 {
        let i = self
            .time_grid
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        series[i]
    }
}

/// Runs the ensemble in parallel and reduces in trajectory order, so the
/// result depends only on the configuration.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleSummary> {
    let steps = cfg.validate()?;
    let results: Vec<TrajectoryResult> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|id| run_trajectory(cfg, id, steps))
        .collect();
    Ok(summarize(cfg, results))
}

fn summarize(cfg: &EnsembleConfig, results: Vec<TrajectoryResult>) -> EnsembleSummary {
    let ctx = &cfg.ctx;
    let t = ctx.target();
    let points = results.iter().map(|r| r.samples.len()).max().unwrap_or(0);
    let time_grid: Vec<f64> = (0..points)
        .map(|i| (i * cfg.record_every) as f64 * cfg.integrator.dt)
        .collect();
    let mut sums = vec![[0.0f64; 6]; points];
    let mut ok = 0usize;
    let mut hygiene = Hygiene::default();
    let mut failures = Vec::new();
    let mut converged = 0usize;
    let mut exponents = Vec::with_capacity(results.len());
    let mut final_levels = Vec::with_capacity(results.len());
    let mut final_fidelity = Vec::with_capacity(results.len());
    let mut max_xi: f64 = 0.0;
    for r in &results {
        hygiene.merge(&r.hygiene);
        max_xi = max_xi.max(r.max_xi_norm);
        exponents.push(r.exponent.slope);
        let observed = match cfg.mode {
            NoiseMode::Physical => &r.final_rho,
            NoiseMode::Synthetic => &r.final_companion,
        };
        if let Some(f) = &r.failure {
            failures.push(f.clone());
            final_levels.push(None);
            final_fidelity.push(f64::NAN);
            continue;
        }
        ok += 1;
        final_fidelity.push(observed.population(t));
        if quantum::bures_to_level(observed, t) < cfg.convergence_threshold {
            converged += 1;
        }
        final_levels.push(
            (0..observed.dim())
                .find(|&k| quantum::bures_to_level(observed, k) < cfg.convergence_threshold),
        );
        for (acc, s) in sums.iter_mut().zip(&r.samples) {
            acc[0] += s.fidelity_to_target;
            acc[1] += s.fidelity_proj;
            acc[2] += s.v_reduction;
            acc[3] += s.v_target;
            acc[4] += s.bures_true;
            acc[5] += s.u;
        }
    }
    let denom = ok.max(1) as f64;
    let col = |j: usize| -> Vec<f64> { sums.iter().map(|a| a[j] / denom).collect() };
    EnsembleSummary {
        trajectory_count: results.len(),
        mean_fidelity: col(0),
        mean_fidelity_proj: col(1),
        mean_lyapunov_v: col(2),
        mean_lyapunov_target: col(3),
        mean_bures_true: col(4),
        mean_u: col(5),
        time_grid,
        convergence_fraction: converged as f64 / results.len() as f64,
        exponent_estimates: exponents,
        final_fidelity,
        final_levels,
        failures,
        hygiene,
        max_xi_norm: max_xi,
        convergence_threshold: cfg.convergence_threshold,
        levels: ctx.dim(),
        paths: cfg.keep_paths.then_some(results),
    }
}

/// Per-level share of trajectories that ended within the convergence
/// threshold of `A_k`. Unresolved trajectories count towards no level, so the
/// entries sum to at most one.
pub fn reduction_histogram(summary: &EnsembleSummary) -> Vec<f64> {
    let mut counts = vec![0usize; summary.levels];
    for k in summary.final_levels.iter().flatten() {
        counts[*k] += 1;
    }
    let n = summary.trajectory_count.max(1) as f64;
    counts.into_iter().map(|c| c as f64 / n).collect()
}

/// Number of trajectories that reached no equilibrium.
pub fn unresolved_count(summary: &EnsembleSummary) -> usize {
    summary.final_levels.iter().filter(|l| l.is_none()).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{self, ThetaCoords};
    use crate::presets;
    use crate::quantum::build_system;
    use crate::sampling;

    fn ctx(target: usize) -> FamilyContext {
        FamilyContext::new(
            presets::reference_base_state(),
            build_system(4, 0.5, 1.0).unwrap(),
            target,
        )
        .unwrap()
    }

    #[test]
    fn reduction_examples() {
        for k in 0..4 {
            assert_eq!(lyapunov_reduction(&DensityMatrix::basis_state(4, k)), 0.0);
        }
        assert!((lyapunov_reduction(&DensityMatrix::maximally_mixed(2)) - 0.5).abs() < 1e-15);
        assert!((lyapunov_reduction(&DensityMatrix::maximally_mixed(4)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn target_examples() {
        let a0 = DensityMatrix::basis_state(4, 0);
        assert_eq!(lyapunov_target(&a0, &a0, 0, true), 0.0);
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((lyapunov_target(&mixed, &mixed, 0, true) - 2.0 * 0.75f64.sqrt()).abs() < 1e-15);
        let a2 = DensityMatrix::basis_state(4, 2);
        assert!((lyapunov_target(&a2, &a2, 1, false) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn exponent_examples() {
        let times: Vec<f64> = (0..=500).map(|i| i as f64 * 0.01).collect();
        let exp: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        assert!((sample_exponent(&times, &exp, 1.0).unwrap().slope + 1.0).abs() < 1e-6);
        let flat = vec![3.0; times.len()];
        assert_eq!(sample_exponent(&times, &flat, 0.5).unwrap().slope, 0.0);
        let wobble: Vec<f64> = times
            .iter()
            .map(|t| (-0.5 * t).exp() * (1.0 + 0.1 * (20.0 * t).sin()))
            .collect();
        assert!((sample_exponent(&times, &wobble, 0.5).unwrap().slope + 0.5).abs() < 0.02);
    }

    #[test]
    fn exponent_floors_zeros() {
        let times = [0.0, 1.0, 2.0, 3.0];
        let fit = sample_exponent(&times, &[1.0, 0.5, 0.0, 0.0], 1.0).unwrap();
        assert!(fit.floored);
        assert!(fit.slope < -100.0);
    }

    #[test]
    fn verdict_tolerance() {
        assert!(StabilityVerdict::new(-0.4, -0.5, 0.15).pass);
        assert!(!StabilityVerdict::new(-0.3, -0.5, 0.15).pass);
    }

    #[test]
    fn zero_step_ensemble_echoes_initial_values() {
        let c = ctx(0);
        let mut cfg = EnsembleConfig::new(c, presets::reference_initial_state());
        cfg.integrator = IntegratorConfig::with_horizon(0.0);
        let s = run_ensemble(&cfg).unwrap();
        assert_eq!(s.time_grid, vec![0.0]);
        assert!((s.mean_fidelity[0] - 0.2).abs() < 1e-15);
        assert!(
            (s.mean_lyapunov_v[0] - lyapunov_reduction(&presets::reference_base_state())).abs()
                < 1e-15
        );
    }

    #[test]
    fn histogram_of_a_fixed_point() {
        let c = ctx(0);
        let mut cfg = EnsembleConfig::new(c, DensityMatrix::basis_state(4, 2));
        cfg.integrator = IntegratorConfig::with_horizon(0.3125);
        cfg.trajectories = 8;
        let s = run_ensemble(&cfg).unwrap();
        assert_eq!(reduction_histogram(&s), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn ensembles_are_reproducible() {
        let c = ctx(0);
        let mut cfg = EnsembleConfig::new(c, presets::reference_initial_state());
        cfg.integrator = IntegratorConfig::with_horizon(0.625);
        cfg.trajectories = 6;
        cfg.record_every = 8;
        cfg.controller = ControllerSpec::rho_theta_power(10.0, 5.0, 0);
        let a = run_ensemble(&cfg).unwrap();
        let b = run_ensemble(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.hygiene.clean());
        assert!(a.failures.is_empty());
    }

    #[test]
    fn bad_record_stride_is_rejected() {
        let mut cfg = EnsembleConfig::new(ctx(0), presets::reference_initial_state());
        cfg.record_every = 3;
        assert!(matches!(
            run_ensemble(&cfg),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    /// Conditional one-step increment `(E[V(θ')] - V(θ)) / Δt` of the
    /// reduction functional under the synthetic-mode `θ` equation, using the
    /// three-point Gauss-Hermite rule over `dY`.
    fn generator_estimate(c: &FamilyContext, th: &ThetaCoords, dt: f64) -> (f64, f64) {
        let nodes = [
            (-(3.0f64).sqrt(), 1.0 / 6.0),
            (0.0, 2.0 / 3.0),
            ((3.0f64).sqrt(), 1.0 / 6.0),
        ];
        let v0 = lyapunov_reduction(&family::rho_from_theta(c, th));
        let mut mean = 0.0;
        for (z, w) in nodes {
            let next = filters::step_theta(th, z * dt.sqrt(), 0.0, c, &Step::new(dt, 0)).unwrap();
            mean += w * lyapunov_reduction(&family::rho_from_theta(c, &next));
        }
        ((mean - v0) / dt, v0)
    }

    #[test]
    fn reduction_functional_decays_on_ensemble_average() {
        let c = ctx(0);
        let eta = c.model().eta();
        let dt: f64 = 1e-4;
        let mut rng = sampling::rng(9);
        let (mut lv, mut v) = (0.0, 0.0);
        let n = 10_000;
        for _ in 0..n {
            let th = ThetaCoords::new(sampling::gaussian_vector(&mut rng, 4)).unwrap();
            let (g, v0) = generator_estimate(&c, &th, dt);
            lv += g / n as f64;
            v += v0 / n as f64;
        }
        assert!(lv <= -0.5 * eta * v + 1e-2, "mean LV {lv}, mean V {v}");
    }

    #[test]
    fn generator_bound_fails_pointwise() {
        // Most weight on A_3 with small, uneven populations elsewhere.
        let c = ctx(0);
        let th = ThetaCoords::new(vec![0.0, 0.6, 0.43, 2.98]).unwrap();
        let (g, v0) = generator_estimate(&c, &th, 1e-5);
        assert!((v0 - 0.749).abs() < 1e-3);
        assert!(g > -0.5 * c.model().eta() * v0 + 1.0, "LV {g}");
    }
}
