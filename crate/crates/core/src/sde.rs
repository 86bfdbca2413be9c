//! Wiener increments, the explicit Euler-Maruyama step, Itô/Stratonovich
//! drift conversion and post-step renormalization of density matrices.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64};
use crate::quantum::DensityMatrix;

/// Default step `5 × 2⁻¹²`.
pub const DEFAULT_DT: f64 = 5.0 / 4096.0;
/// Default horizon.
pub const DEFAULT_HORIZON: f64 = 5.0;
/// Eigenvalues below this after a step are treated as corruption rather
/// than round-off.
pub const CLAMP_LIMIT: f64 = -1e-6;

/// Gaussian increments of variance `dt` from a seeded ChaCha8 stream.
///
/// Trajectory `i` of an ensemble uses stream `i` of the base seed, so every
/// path is reproducible on its own regardless of scheduling.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    stream: u64,
    dt: f64,
    sqrt_dt: f64,
    cursor: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, dt: f64) -> Self {
        Self::for_trajectory(seed, 0, dt)
    }

    pub fn for_trajectory(seed: u64, trajectory: u64, dt: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trajectory);
        Self {
            seed,
            stream: trajectory,
            dt,
            sqrt_dt: dt.sqrt(),
            cursor: 0,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of increments drawn so far.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Next `N(0, dt)` increment.
    pub fn sample_increment(&mut self) -> f64 {
        self.cursor += 1;
        let z: f64 = self.rng.sample(StandardNormal);
        self.sqrt_dt * z
    }

    pub fn take(&mut self, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_increment()).collect()
    }
}

/// Sums consecutive blocks of `factor` increments: the same Brownian path
/// seen on a grid `factor` times coarser.
pub fn coarsen(increments: &[f64], factor: usize) -> Vec<f64> {
    increments.chunks(factor).map(|c| c.iter().sum()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub horizon: f64,
    pub renormalize: bool,
    pub clamp_psd: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            renormalize: true,
            clamp_psd: true,
        }
    }
}

impl IntegratorConfig {
    pub fn with_horizon(horizon: f64) -> Self {
        Self {
            horizon,
            ..Self::default()
        }
    }

    /// Number of steps; the horizon must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidConfiguration(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidConfiguration(format!(
                "horizon must be non-negative, got {}",
                self.horizon
            )));
        }
        let ratio = self.horizon / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidConfiguration(format!(
                "horizon {} is not a whole number of steps of {}",
                self.horizon, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

/// Measured increments `dY`, one per step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservationRecord {
    pub dy: Vec<f64>,
}

/// Anything that can be advanced by `x + a dt + b dW`.
pub trait SdeState: Sized {
    fn combine(&self, drift: &Self, dt: f64, diffusion: &Self, dw: f64) -> Self;
    fn all_finite(&self) -> bool;
}

impl SdeState for f64 {
    fn combine(&self, drift: &Self, dt: f64, diffusion: &Self, dw: f64) -> Self {
        self + drift * dt + diffusion * dw
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl SdeState for Vec<f64> {
    fn combine(&self, drift: &Self, dt: f64, diffusion: &Self, dw: f64) -> Self {
        self.iter()
            .zip(drift)
            .zip(diffusion)
            .map(|((x, a), b)| x + a * dt + b * dw)
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl SdeState for DVector<f64> {
    fn combine(&self, drift: &Self, dt: f64, diffusion: &Self, dw: f64) -> Self {
        self + drift * dt + diffusion * dw
    }

    fn all_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl SdeState for CMatrix {
    fn combine(&self, drift: &Self, dt: f64, diffusion: &Self, dw: f64) -> Self {
        self + drift * C64::new(dt, 0.0) + diffusion * C64::new(dw, 0.0)
    }

    fn all_finite(&self) -> bool {
        linalg::is_finite(self)
    }
}

/// One explicit Euler-Maruyama step. `step` is only used for diagnostics.
pub fn euler_step<S: SdeState>(
    state: &S,
    drift: &S,
    diffusion: &S,
    dt: f64,
    dw: f64,
    step: usize,
) -> Result<S> {
    let next = state.combine(drift, dt, diffusion, dw);
    if !next.all_finite() {
        return Err(Error::BlowUp {
            step,
            detail: "non-finite state after Euler step".into(),
        });
    }
    Ok(next)
}

/// Itô drift `a + ½ (∂g) g` from a Stratonovich drift `a`.
/// `jacobian_action(v)` must return the directional derivative of the
/// diffusion field in direction `v`, evaluated at the current point.
pub fn stratonovich_to_ito<S: SdeState>(
    drift_s: &S,
    diffusion: &S,
    jacobian_action: impl Fn(&S) -> S,
) -> S {
    let correction = jacobian_action(diffusion);
    drift_s.combine(&correction, 0.5, diffusion, 0.0)
}

/// Stratonovich drift `a - ½ (∂g) g` from an Itô drift `a`.
pub fn ito_to_stratonovich<S: SdeState>(
    drift_i: &S,
    diffusion: &S,
    jacobian_action: impl Fn(&S) -> S,
) -> S {
    let correction = jacobian_action(diffusion);
    drift_i.combine(&correction, -0.5, diffusion, 0.0)
}

/// Hermitizes and divides by the trace. With `clamp`, eigenvalues in
/// `[-1e-6, 0)` are clipped to zero and the result is normalized again.
pub fn renormalize(rho: &CMatrix, clamp: bool) -> Result<DensityMatrix> {
    if !linalg::is_finite(rho) {
        return Err(Error::StateCorruption("non-finite entries".into()));
    }
    let h = linalg::hermitize(rho);
    let tr = h.trace().re;
    if !(tr > 0.0) {
        return Err(Error::StateCorruption(format!(
            "trace {tr} is not positive"
        )));
    }
    let m = h / C64::new(tr, 0.0);
    if linalg::is_psd_within(&m, 1e-14) {
        return Ok(DensityMatrix::from_raw(m));
    }
    let (values, vectors) = linalg::hermitian_eigen(&m);
    let min = values[0];
    if min < CLAMP_LIMIT {
        return Err(Error::StateCorruption(format!(
            "eigenvalue {min:.3e} below {CLAMP_LIMIT:e}"
        )));
    }
    if !clamp {
        return Ok(DensityMatrix::from_raw(m));
    }
    let clipped = linalg::hermitize(&linalg::spectral_map(&values, &vectors, |x| x.max(0.0)));
    let tr = clipped.trace().re;
    Ok(DensityMatrix::from_raw(clipped / C64::new(tr, 0.0)))
}
