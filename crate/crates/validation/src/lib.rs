//! Shared harness for the acceptance suite: criterion reporting, state
//! hygiene bookkeeping, and the standard four-level ensemble setup.

use std::time::Instant;

use projfilter::analysis::{EnsembleConfig, EnsembleSummary, Hygiene};
use projfilter::family::FamilyContext;
use projfilter::feedback::ControllerSpec;
use projfilter::filters::Companion;
use projfilter::presets;
use projfilter::quantum::{build_system, DensityMatrix};
use projfilter::sde::IntegratorConfig;

pub const ETA: f64 = 0.5;
pub const BASE_SEED: u64 = 2024;

#[derive(Default)]
pub struct Suite {
    results: Vec<(String, bool)>,
    hygiene: Vec<(String, Hygiene, usize)>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Prints one `PASS`/`FAIL` line and records the outcome.
    pub fn report(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((name.into(), pass));
    }

    /// Keeps the hygiene record of an ensemble run for the final check.
    pub fn track(&mut self, name: &str, s: &EnsembleSummary) {
        if let Some(f) = s.failures.first() {
            eprintln!(
                "  [{name}: {} trajectories stopped early, first at step {}: {}]",
                s.failures.len(),
                f.step,
                f.detail
            );
        }
        self.hygiene
            .push((name.into(), s.hygiene, s.failures.len()));
    }

    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.1).count()
    }

    pub fn failed(&self) -> usize {
        self.results.len() - self.passed()
    }

    /// `|Tr ρ - 1| ≤ 1e-10` and `λ_min ≥ -1e-8` over every tracked run, with
    /// no trajectory stopped by state corruption.
    pub fn report_hygiene(&mut self) {
        let mut total = Hygiene::default();
        let mut clean = true;
        let mut corrupted = 0;
        for (_, h, f) in &self.hygiene {
            clean &= h.clean() && h.min_eigenvalue >= -1e-8;
            total.merge(h);
            corrupted += f;
        }
        let runs = self.hygiene.len();
        self.report(
            "state hygiene",
            clean && corrupted == 0,
            format!(
                "{runs} runs, {} checked states, max |Tr rho - 1| = {:.3e}, min eigenvalue = {:.3e}, PSD violations {}, corrupted trajectories {corrupted}",
                total.checks,
                total.max_trace_error,
                total.min_eigenvalue,
                total.psd_violations
            ),
        );
    }
}

pub fn ctx_with(base: DensityMatrix, target: usize) -> FamilyContext {
    FamilyContext::new(base, build_system(4, ETA, 1.0).unwrap(), target).unwrap()
}

pub fn reference_ctx(target: usize) -> FamilyContext {
    ctx_with(presets::reference_base_state(), target)
}

/// Physical-mode ensemble from the bundled initial state, sampled every
/// fourth step.
pub fn ensemble(
    ctx: FamilyContext,
    controller: ControllerSpec,
    initial: Companion,
    horizon: f64,
) -> EnsembleConfig {
    let mut cfg = EnsembleConfig::new(ctx, presets::reference_initial_state());
    cfg.controller = controller;
    cfg.initial = initial;
    cfg.integrator = IntegratorConfig::with_horizon(horizon);
    cfg.base_seed = BASE_SEED;
    cfg.record_every = 4;
    cfg
}

pub fn timed<T>(label: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    eprintln!("  [{label}: {:.1}s]", start.elapsed().as_secs_f64());
    out
}

/// Index and value of the grid point closest to `t`.
pub fn nearest(grid: &[f64], t: f64) -> (usize, f64) {
    let i = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(i, _)| i)
        .unwrap();
    (i, grid[i])
}
