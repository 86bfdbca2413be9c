//! Experiment configuration, bundled presets, and output files.
//!
//! A configuration is a TOML document; matrices are row-major arrays of
//! `[re, im]` pairs. Overrides use dotted keys, e.g. `controller.alpha=3`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{
    self, EnsembleConfig, EnsembleSummary, DEFAULT_CONVERGENCE_THRESHOLD, DEFAULT_EXPONENT_WINDOW,
};
use crate::error::{Error, Result};
use crate::family::{self, FamilyContext, ThetaCoords, XiCoords};
use crate::feedback::{self, AssumptionReport, ControllerKind, ControllerSpec};
use crate::filters::{Companion, CompanionKind, NoiseMode};
use crate::linalg::{CMatrix, C64};
use crate::presets;
use crate::quantum::{self, DensityMatrix, DEFAULT_OMEGA};
use crate::sde::IntegratorConfig;

pub const PRESET_NAMES: [&str; 6] = [
    "figure1",
    "figure2",
    "figure3",
    "reduction_open_loop",
    "reduction_synthetic",
    "assumption_audit",
];

/// Environment variable that replaces `outputs.directory`.
pub const OUT_DIR_ENV: &str = "PROJFILTER_OUT_DIR";

/// Row-major `[re, im]` entries.
pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub mode: NoiseMode,
    pub system: SystemSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    pub initial: InitialSection,
    #[serde(default)]
    pub controller: ControllerSpec,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default)]
    pub audit: AuditSection,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dim: usize,
    pub eta: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub rho0: MatrixSpec,
    pub rho_bar0: MatrixSpec,
    #[serde(default)]
    pub companion: CompanionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub trajectories: usize,
    pub base_seed: u64,
    pub record_every: usize,
    pub convergence_threshold: f64,
    pub exponent_window: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            trajectories: 1,
            base_seed: 0,
            record_every: 1,
            convergence_threshold: DEFAULT_CONVERGENCE_THRESHOLD,
            exponent_window: DEFAULT_EXPONENT_WINDOW,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub per_trajectory: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            per_trajectory: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    /// Also write `assumptions.json` when running.
    pub enabled: bool,
    pub samples: usize,
    pub seed: u64,
}

impl Default for AuditSection {
    fn default() -> Self {
        Self {
            enabled: false,
            samples: 2000,
            seed: 7,
        }
    }
}

pub fn matrix_to_spec(m: &CMatrix) -> MatrixSpec {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [m[(i, j)].re, m[(i, j)].im])
                .collect()
        })
        .collect()
}

pub fn matrix_from_spec(spec: &MatrixSpec, what: &str) -> Result<CMatrix> {
    let n = spec.len();
    if n == 0 || spec.iter().any(|row| row.len() != n) {
        return Err(Error::Config(format!(
            "{what} must be a non-empty square array of [re, im] pairs"
        )));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        C64::new(spec[i][j][0], spec[i][j][1])
    }))
}

fn density_from_spec(spec: &MatrixSpec, what: &str, dim: usize) -> Result<DensityMatrix> {
    let m = matrix_from_spec(spec, what)?;
    if m.nrows() != dim {
        return Err(Error::Config(format!(
            "{what} is {0}x{0} but system.dim = {dim}",
            m.nrows()
        )));
    }
    DensityMatrix::new(m).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn base_config(name: &str) -> ExperimentConfig {
    ExperimentConfig {
        name: name.into(),
        mode: NoiseMode::Physical,
        system: SystemSection {
            dim: 4,
            eta: 0.5,
            omega: DEFAULT_OMEGA,
        },
        integrator: IntegratorConfig::default(),
        initial: InitialSection {
            rho0: matrix_to_spec(presets::reference_initial_state().matrix()),
            rho_bar0: matrix_to_spec(presets::reference_base_state().matrix()),
            companion: CompanionKind::Projection,
            theta0: None,
            xi0: None,
        },
        controller: ControllerSpec::zero(0),
        ensemble: EnsembleSection {
            base_seed: 2024,
            record_every: 4,
            ..EnsembleSection::default()
        },
        outputs: OutputSection {
            directory: PathBuf::from("out").join(name),
            per_trajectory: true,
        },
        audit: AuditSection::default(),
    }
}

/// One of the bundled configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut c = base_config(name);
    match name {
        "figure1" => {
            c.controller = ControllerSpec::rho_theta_power(10.0, 5.0, 0);
        }
        "figure2" => {
            c.controller = ControllerSpec::xi_edge_general(2.0, 2.0, 0);
            c.initial.companion = CompanionKind::Xi;
        }
        "figure3" => {
            c.controller = ControllerSpec::xi_interior_general(2.0, 2.0, 1);
            c.initial.companion = CompanionKind::Xi;
        }
        "reduction_open_loop" => {
            c.integrator = IntegratorConfig::with_horizon(20.0);
            c.ensemble.trajectories = 2000;
            c.ensemble.record_every = 64;
            c.outputs.per_trajectory = false;
        }
        "reduction_synthetic" => {
            c.mode = NoiseMode::Synthetic;
            c.initial.companion = CompanionKind::Theta;
            c.ensemble.trajectories = 1000;
            c.ensemble.record_every = 1;
            c.outputs.per_trajectory = false;
        }
        "assumption_audit" => {
            c.controller = ControllerSpec::xi_edge(10.0, 5.0, 0);
            c.initial.companion = CompanionKind::Xi;
            c.ensemble.trajectories = 20;
            c.outputs.per_trajectory = false;
            c.audit = AuditSection {
                enabled: true,
                samples: 10_000,
                seed: 7,
            };
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; available: {}",
                PRESET_NAMES.join(", ")
            )))
        }
    }
    Ok(c)
}

/// Parses a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn to_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `key.path=value` overrides. Values are read as TOML, falling back
/// to a bare string.
pub fn apply_overrides(
    config: &ExperimentConfig,
    overrides: &[String],
) -> Result<ExperimentConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut table = toml::Table::try_from(config).map_err(|e| Error::Config(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            Error::Config(format!("override '{item}' is not of the form key=value"))
        })?;
        let path: Vec<&str> = key.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(Error::Config(format!(
                "override '{item}' has an empty key segment"
            )));
        }
        let mut node = &mut table;
        for seg in &path[..path.len() - 1] {
            let entry = node
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| {
                Error::Config(format!("override '{item}': '{seg}' is not a section"))
            })?;
        }
        node.insert(
            path[path.len() - 1].to_string(),
            parse_override_value(raw.trim()),
        );
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(format!("after overrides: {e}")))
}

/// Validated run inputs.
#[derive(Clone, Debug)]
pub struct PreparedRun {
    pub config: ExperimentConfig,
    pub ensemble: EnsembleConfig,
}

fn initial_companion(config: &ExperimentConfig, ctx: &FamilyContext) -> Result<Companion> {
    let dim = ctx.dim();
    let init = &config.initial;
    if init.theta0.is_some() && init.xi0.is_some() {
        return Err(Error::Config(
            "give at most one of initial.theta0 and initial.xi0".into(),
        ));
    }
    let theta = match &init.theta0 {
        Some(t) if t.len() != dim => {
            return Err(Error::Config(format!(
                "initial.theta0 has {} entries, expected {dim}",
                t.len()
            )))
        }
        Some(t) => Some(
            ThetaCoords::new(t.clone())
                .map_err(|e| Error::Config(format!("initial.theta0: {e}")))?,
        ),
        None => None,
    };
    let xi = match &init.xi0 {
        Some(x) if x.len() != dim - 1 => {
            return Err(Error::Config(format!(
                "initial.xi0 has {} entries, expected {}",
                x.len(),
                dim - 1
            )))
        }
        Some(x) => {
            Some(XiCoords::new(x.clone()).map_err(|e| Error::Config(format!("initial.xi0: {e}")))?)
        }
        None => None,
    };
    let t = ctx.target();
    Ok(match init.companion {
        CompanionKind::Estimate => Companion::Estimate(ctx.base().clone()),
        CompanionKind::Projection => Companion::Projection(match (&theta, &xi) {
            (Some(th), _) => family::rho_from_theta(ctx, th),
            (_, Some(x)) => family::rho_from_xi(ctx, x),
            _ => ctx.base().clone(),
        }),
        CompanionKind::Theta => Companion::Theta(match (theta, &xi) {
            (Some(th), _) => th,
            (_, Some(x)) => {
                family::xi_to_theta(x, t).map_err(|e| Error::Config(format!("initial.xi0: {e}")))?
            }
            _ => ThetaCoords::zeros(dim),
        }),
        CompanionKind::Xi => Companion::Xi(match (&theta, xi) {
            (Some(th), _) => family::theta_to_xi(th, t),
            (_, Some(x)) => x,
            _ => XiCoords::ones(dim - 1),
        }),
    })
}

/// Checks every static part of the configuration and assembles the ensemble.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedRun> {
    let config_err = |e: Error| match e {
        Error::InvalidConfiguration(msg) | Error::Domain(msg) => Error::Config(msg),
        Error::Dimension { .. } => Error::Config(e.to_string()),
        other => other,
    };
    let s = &config.system;
    let model = quantum::build_system(s.dim, s.eta, s.omega).map_err(config_err)?;
    let rho0 = density_from_spec(&config.initial.rho0, "initial.rho0", s.dim)?;
    let base = density_from_spec(&config.initial.rho_bar0, "initial.rho_bar0", s.dim)?;
    let ctx = FamilyContext::new(base, model, config.controller.target).map_err(config_err)?;
    config.controller.validate(s.dim).map_err(config_err)?;
    config.integrator.steps().map_err(config_err)?;
    let initial = initial_companion(config, &ctx)?;
    let e = &config.ensemble;
    let ensemble = EnsembleConfig {
        rho0,
        initial,
        integrator: config.integrator.clone(),
        controller: config.controller.clone(),
        mode: config.mode,
        trajectories: e.trajectories,
        base_seed: e.base_seed,
        record_every: e.record_every,
        convergence_threshold: e.convergence_threshold,
        exponent_window: e.exponent_window,
        keep_paths: config.outputs.per_trajectory,
        ctx,
    };
    let steps = config.integrator.steps().map_err(config_err)?;
    if e.trajectories == 0 {
        return Err(Error::Config(
            "ensemble.trajectories must be at least 1".into(),
        ));
    }
    if e.record_every == 0 || steps % e.record_every != 0 {
        return Err(Error::Config(format!(
            "ensemble.record_every = {} must divide the step count {steps}",
            e.record_every
        )));
    }
    if !(e.exponent_window > 0.0 && e.exponent_window <= 1.0) {
        return Err(Error::Config(format!(
            "ensemble.exponent_window must lie in (0, 1], got {}",
            e.exponent_window
        )));
    }
    Ok(PreparedRun {
        config: config.clone(),
        ensemble,
    })
}

/// Static diagnostics plus the assumption audit.
#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub diagnostics: Vec<String>,
    pub assumptions: AssumptionReport,
}

impl VerifyReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        for d in &self.diagnostics {
            out.push_str(d);
            out.push('\n');
        }
        out.push_str(&self.assumptions.render());
        out
    }
}

pub fn verify(config: &ExperimentConfig) -> Result<VerifyReport> {
    let run = prepare(config)?;
    let ctx = &run.ensemble.ctx;
    let steps = config.integrator.steps()?;
    let mut diagnostics = vec![
        format!(
            "system: dim {}, eta {}, omega {}; {} steps of {} up to t = {}",
            config.system.dim,
            config.system.eta,
            config.system.omega,
            steps,
            config.integrator.dt,
            config.integrator.horizon
        ),
        format!(
            "family: weights {:?}, target {}",
            ctx.weights(),
            ctx.target()
        ),
    ];
    if ctx.is_control_blind() {
        diagnostics.push(
            "warning: every coupling coefficient of rho_bar0 vanishes; the projection filter does not see the control"
                .into(),
        );
        if matches!(
            config.controller.kind,
            ControllerKind::XiEdgeGeneral | ControllerKind::XiInteriorGeneral
        ) {
            diagnostics
                .push("warning: the selected law is identically zero for this rho_bar0".into());
        }
    }
    let assumptions = feedback::validate_assumptions(
        &config.controller,
        ctx,
        config.audit.samples,
        config.audit.seed,
    )?;
    Ok(VerifyReport {
        diagnostics,
        assumptions,
    })
}

/// Files written by a finished run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub directory: PathBuf,
    pub summary: EnsembleSummary,
    pub warnings: usize,
    pub files: Vec<PathBuf>,
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

pub const TRAJECTORY_COLUMNS: [&str; 11] = [
    "time",
    "trajectory_id",
    "fidelity_to_target",
    "bures_true",
    "bures_proj",
    "u",
    "V_reduction",
    "V_target",
    "xi_norm",
    "fidelity_proj",
    "fidelity_true_proj",
];

pub const SUMMARY_COLUMNS: [&str; 7] = [
    "time",
    "mean_fidelity",
    "mean_fidelity_proj",
    "mean_V_reduction",
    "mean_V_target",
    "mean_bures_true",
    "mean_u",
];

fn write_trajectories(path: &Path, summary: &EnsembleSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRAJECTORY_COLUMNS).map_err(csv_err)?;
    for r in summary.paths.iter().flatten() {
        for s in &r.samples {
            w.write_record([
                fmt(s.time),
                r.id.to_string(),
                fmt(s.fidelity_to_target),
                fmt(s.bures_true),
                fmt(s.bures_proj),
                fmt(s.u),
                fmt(s.v_reduction),
                fmt(s.v_target),
                fmt(s.xi_norm),
                fmt(s.fidelity_proj),
                fmt(s.mixed_fidelity),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_summary(path: &Path, summary: &EnsembleSummary) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(SUMMARY_COLUMNS).map_err(csv_err)?;
    for i in 0..summary.time_grid.len() {
        w.write_record([
            fmt(summary.time_grid[i]),
            fmt(summary.mean_fidelity[i]),
            fmt(summary.mean_fidelity_proj[i]),
            fmt(summary.mean_lyapunov_v[i]),
            fmt(summary.mean_lyapunov_target[i]),
            fmt(summary.mean_bures_true[i]),
            fmt(summary.mean_u[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the ensemble and writes `trajectories.csv` (when per-trajectory
/// output is on), `summary.csv`, and `manifest.json` into `directory`
/// (or `outputs.directory` when `None`).
pub fn run(
    config: &ExperimentConfig,
    overrides: &[String],
    directory: Option<&Path>,
) -> Result<RunOutcome> {
    let prepared = prepare(config)?;
    let summary = analysis::run_ensemble(&prepared.ensemble)?;
    let dir = directory
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.outputs.directory.clone());
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    if config.outputs.per_trajectory {
        let p = dir.join("trajectories.csv");
        write_trajectories(&p, &summary)?;
        files.push(p);
    }
    let p = dir.join("summary.csv");
    write_summary(&p, &summary)?;
    files.push(p);

    let audit = if config.audit.enabled {
        let report = feedback::validate_assumptions(
            &config.controller,
            &prepared.ensemble.ctx,
            config.audit.samples,
            config.audit.seed,
        )?;
        let p = dir.join("assumptions.json");
        fs::write(
            &p,
            serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?,
        )?;
        files.push(p);
        Some(report.required_pass())
    } else {
        None
    };

    let warnings = summary.failures.len();
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let manifest = serde_json::json!({
        "name": config.name,
        "code_version": env!("CARGO_PKG_VERSION"),
        "timestamp_unix": timestamp,
        "base_seed": config.ensemble.base_seed,
        "trajectory_seeds": "stream i of ChaCha8(base_seed) drives trajectory i",
        "overrides": overrides,
        "config": config,
        "results": {
            "trajectory_count": summary.trajectory_count,
            "convergence_fraction": summary.convergence_fraction,
            "median_exponent": summary.median_exponent(),
            "reduction_histogram": analysis::reduction_histogram(&summary),
            "unresolved": analysis::unresolved_count(&summary),
            "max_xi_norm": summary.max_xi_norm,
            "hygiene": summary.hygiene,
            "failures": summary.failures,
            "assumptions_required_pass": audit,
        },
        "warnings": warnings,
    });
    let p = dir.join("manifest.json");
    fs::write(
        &p,
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(e.into()))?,
    )?;
    files.push(p);
    Ok(RunOutcome {
        directory: dir,
        summary,
        warnings,
        files,
    })
}
