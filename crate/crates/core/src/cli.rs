//! Command-line front end over JSON systems, CSV trajectories and JSON
//! reports.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 a named hypothesis failed,
//! 3 a solver failed. Every artifact is written to a temporary file in the
//! output directory and renamed into place.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use serde_json::{json, Value};

use crate::design::{
    design_switching, verify_certificate, CertificateDocument, DesignError, DesignObjective,
    DesignOptions, SwitchingLaw,
};
use crate::equilibria::{self, EquilibriumError, EquilibriumTarget};
use crate::fixtures::{self, DEMO_NAMES};
use crate::linalg;
use crate::rate::{self, CurvePoint, RateDocument, RateError, RateOptions};
use crate::simulate::{self, SimulationConfig, SimulationError};
use crate::sysmodel::{
    convex_combination, validate_system, SimplexVector, SwitchedAffineSystem, SystemDocument,
};

#[derive(Debug, Parser)]
#[command(
    name = "switchctl",
    version,
    about = "Switching-law synthesis for singular equilibria"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural checks on a system file.
    Validate(ValidateArgs),
    /// Equilibrium, nullspace split and interior condition for given weights.
    Equilibria(PlantArgs),
    /// Solve the Lyapunov inequalities and report the certificate.
    Design(DesignArgs),
    /// Design, then simulate the closed loop.
    Simulate(SimulateArgs),
    /// Design, then certify local exponential rates.
    Rate(RateArgs),
    /// Run a built-in fixture.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlantArgs {
    /// JSON system file.
    #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
    pub system: Option<PathBuf>,
    /// Built-in fixture instead of a file.
    #[arg(long)]
    pub demo: Option<String>,
    /// Simplex weights as comma-separated rationals, e.g. `1/3,1/3,1/3`.
    #[arg(long)]
    pub lambda: Option<String>,
    /// Nullspace coordinates of the equilibrium (default zero).
    #[arg(long = "xe-perp")]
    pub xe_perp: Option<String>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub plant: PlantArgs,
    /// Smallest accepted eigenvalue margin of the strict inequalities.
    #[arg(long)]
    pub margin: Option<f64>,
    /// Minimize cond(P) subject to `P ⪰ floor·I` instead of maximizing the margin.
    #[arg(long = "min-condition")]
    pub min_condition: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    #[arg(long)]
    pub x0: Option<String>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub design: DesignArgs,
    /// Squared ball radii `R` as `start:stop:count` or a comma list; each is
    /// mapped to the level `r = R·s_max(P)`.
    #[arg(long = "r-grid")]
    pub r_grid: Option<String>,
    /// Use this β instead of the SOS search.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Solve for a full G_ε instead of ρI.
    #[arg(long = "general-g")]
    pub general_g: bool,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// One of example1, example2, motor-position, motor-velocity.
    pub name: String,
    /// Also simulate the designed loop.
    #[arg(long)]
    pub simulate: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Validate,
    Equilibria,
    Design,
    Simulate,
    Rate,
    Demo,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    File(PathBuf),
    Demo(String),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOverrides {
    pub enabled: bool,
    pub x0: Option<Vec<f64>>,
    pub step: Option<f64>,
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateConfig {
    /// Squared radii `R`.
    pub radii: Option<Vec<f64>>,
    pub beta: Option<f64>,
    pub general_g: bool,
}

/// Everything one invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub command: CommandKind,
    pub source: Source,
    pub lambda: Option<Vec<f64>>,
    pub xe_perp: Option<Vec<f64>>,
    pub margin: Option<f64>,
    pub min_condition: Option<f64>,
    pub simulation: SimulationOverrides,
    pub rate: RateConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Io(String),
    Parse(String),
    Hypothesis { name: String, message: String },
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) | CliError::Parse(_) => 1,
            CliError::Hypothesis { .. } => 2,
            CliError::Solver(_) => 3,
        }
    }

    fn hypothesis(&self) -> Option<&str> {
        match self {
            CliError::Hypothesis { name, .. } => Some(name),
            _ => None,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Io(m) | CliError::Parse(m) | CliError::Solver(m) => m.clone(),
            CliError::Hypothesis { message, .. } => message.clone(),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e.hypothesis() {
            Some(name) => CliError::Hypothesis {
                name: name.to_string(),
                message: e.to_string(),
            },
            None => CliError::Solver(e.to_string()),
        }
    }
}

impl From<EquilibriumError> for CliError {
    fn from(e: EquilibriumError) -> Self {
        DesignError::from(e).into()
    }
}

impl From<RateError> for CliError {
    fn from(e: RateError) -> Self {
        match e.hypothesis() {
            Some(name) => CliError::Hypothesis {
                name: name.to_string(),
                message: e.to_string(),
            },
            None => CliError::Solver(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidConfig(m) => CliError::Parse(m),
            SimulationError::Divergence { .. } => CliError::Solver(e.to_string()),
            SimulationError::Design(d) => d.into(),
            SimulationError::Export(m) => CliError::Io(m),
        }
    }
}

/// `p/q` or a plain decimal.
pub fn parse_rational(s: &str) -> Result<f64, CliError> {
    let s = s.trim();
    let bad = || CliError::Parse(format!("not a number: {s:?}"));
    let v = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(CliError::Parse(format!("zero denominator in {s:?}")));
            }
            num / den
        }
        None => s.parse().map_err(|_| bad())?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    if s.trim().is_empty() {
        return Err(CliError::Parse("empty list".into()));
    }
    s.split(',').map(parse_rational).collect()
}

/// `start:stop:count` (inclusive, evenly spaced) or a comma list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, k] => {
            let a = parse_rational(a)?;
            let b = parse_rational(b)?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| CliError::Parse(format!("bad grid count in {s:?}")))?;
            match k {
                0 => Err(CliError::Parse("grid count must be positive".into())),
                1 => Ok(vec![a]),
                _ => Ok((0..k)
                    .map(|j| a + (b - a) * j as f64 / (k - 1) as f64)
                    .collect()),
            }
        }
        [_] => parse_list(s),
        _ => Err(CliError::Parse(format!(
            "grid must be start:stop:count, got {s:?}"
        ))),
    }
}

impl JobSpec {
    fn plant(command: CommandKind, p: PlantArgs) -> Result<Self, CliError> {
        let source = match (p.system, p.demo) {
            (Some(path), None) => Source::File(path),
            (None, Some(name)) => Source::Demo(name),
            _ => {
                return Err(CliError::Parse(
                    "exactly one of --system and --demo is required".into(),
                ))
            }
        };
        Ok(Self {
            command,
            source,
            lambda: p.lambda.as_deref().map(parse_list).transpose()?,
            xe_perp: p.xe_perp.as_deref().map(parse_list).transpose()?,
            margin: None,
            min_condition: None,
            simulation: SimulationOverrides::default(),
            rate: RateConfig::default(),
            out_dir: p.out,
        })
    }

    fn design(command: CommandKind, d: DesignArgs) -> Result<Self, CliError> {
        let mut job = Self::plant(command, d.plant)?;
        job.margin = d.margin;
        job.min_condition = d.min_condition;
        Ok(job)
    }

    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        match cli.command {
            Command::Validate(v) => Ok(Self {
                command: CommandKind::Validate,
                source: Source::File(v.system),
                lambda: None,
                xe_perp: None,
                margin: None,
                min_condition: None,
                simulation: SimulationOverrides::default(),
                rate: RateConfig::default(),
                out_dir: v.out,
            }),
            Command::Equilibria(p) => Self::plant(CommandKind::Equilibria, p),
            Command::Design(d) => Self::design(CommandKind::Design, d),
            Command::Simulate(s) => {
                let mut job = Self::design(CommandKind::Simulate, s.design)?;
                job.simulation = SimulationOverrides {
                    enabled: true,
                    x0: s.x0.as_deref().map(parse_list).transpose()?,
                    step: s.step,
                    horizon: s.horizon,
                };
                Ok(job)
            }
            Command::Rate(r) => {
                let mut job = Self::design(CommandKind::Rate, r.design)?;
                job.rate = RateConfig {
                    radii: r.r_grid.as_deref().map(parse_grid).transpose()?,
                    beta: r.beta,
                    general_g: r.general_g,
                };
                Ok(job)
            }
            Command::Demo(d) => Ok(Self {
                command: CommandKind::Demo,
                source: Source::Demo(d.name),
                lambda: None,
                xe_perp: None,
                margin: None,
                min_condition: None,
                simulation: SimulationOverrides {
                    enabled: d.simulate,
                    ..SimulationOverrides::default()
                },
                rate: RateConfig::default(),
                out_dir: d.out,
            }),
        }
    }
}

/// Write `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| CliError::Io(format!("{}: {e}", tmp.display())))?;
    fs::rename(&tmp, &target).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        CliError::Io(format!("{}: {e}", target.display()))
    })?;
    Ok(target)
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Plant, weights, target and (for demos) the fixture.
struct Plant {
    system: SwitchedAffineSystem,
    lambda: SimplexVector,
    target: EquilibriumTarget,
    fixture: Option<fixtures::Fixture>,
}

fn read_document(path: &Path) -> Result<SystemDocument, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

fn load_plant(job: &JobSpec) -> Result<Plant, CliError> {
    let (system, fixture) = match &job.source {
        Source::File(path) => {
            let doc = read_document(path)?;
            let report = validate_system(&doc);
            if !report.valid {
                return Err(CliError::Hypothesis {
                    name: "InvalidSystem".into(),
                    message: report.issues.join("; "),
                });
            }
            let sys =
                SwitchedAffineSystem::try_from(doc).map_err(|e| CliError::Parse(e.to_string()))?;
            (sys, None)
        }
        Source::Demo(name) => {
            let f = fixtures::by_name(name).ok_or_else(|| {
                CliError::Parse(format!(
                    "unknown demo {name:?}; expected one of {}",
                    DEMO_NAMES.join(", ")
                ))
            })?;
            (f.system.clone(), Some(f))
        }
    };
    let lambda = match (&job.lambda, &fixture) {
        (Some(w), _) => {
            if w.len() != system.modes() {
                return Err(CliError::Parse(format!(
                    "--lambda has {} weights for {} modes",
                    w.len(),
                    system.modes()
                )));
            }
            SimplexVector::new(w.clone()).map_err(|e| CliError::Parse(e.to_string()))?
        }
        (None, Some(f)) => f.lambda.clone(),
        (None, None) => return Err(CliError::Parse("--lambda is required with --system".into())),
    };
    let target = match (&job.xe_perp, &fixture) {
        (Some(v), _) => EquilibriumTarget::Perp(DVector::from_vec(v.clone())),
        (None, Some(f)) if job.lambda.is_none() => f.target.clone(),
        _ => {
            let (a_l, _) =
                convex_combination(&system, &lambda).map_err(|e| CliError::Parse(e.to_string()))?;
            let d = equilibria::nullspace_decomposition(&a_l, equilibria::DEFAULT_RANK_TOL)?;
            EquilibriumTarget::Perp(DVector::zeros(d.m))
        }
    };
    Ok(Plant {
        system,
        lambda,
        target,
        fixture,
    })
}

fn design_options(job: &JobSpec, plant: &Plant) -> DesignOptions {
    let mut opts = DesignOptions::default();
    if let Some(m) = job.margin {
        opts.margin = m;
    }
    opts.objective = match (job.min_condition, &plant.fixture) {
        (Some(floor), _) => DesignObjective::MinCondition { floor },
        (None, Some(f)) => f.objective,
        (None, None) => DesignObjective::MaxMargin,
    };
    opts
}

fn design(job: &JobSpec, plant: &Plant) -> Result<SwitchingLaw, CliError> {
    Ok(design_switching(
        &plant.system,
        &plant.lambda,
        &plant.target,
        &design_options(job, plant),
    )?)
}

/// Artifacts and a JSON summary of a successful run.
struct Success {
    artifacts: Vec<PathBuf>,
    summary: Value,
    lines: Vec<String>,
}

fn run_validate(job: &JobSpec) -> Result<Success, CliError> {
    let Source::File(path) = &job.source else {
        return Err(CliError::Parse("validate needs --system".into()));
    };
    let doc = read_document(path)?;
    let report = validate_system(&doc);
    let out = write_atomic(&job.out_dir, "validation.json", &json_bytes(&report)?)?;
    if !report.valid {
        return Err(CliError::Hypothesis {
            name: "InvalidSystem".into(),
            message: report.issues.join("; "),
        });
    }
    Ok(Success {
        artifacts: vec![out],
        summary: json!({ "valid": true, "n": doc.n, "modes": doc.modes }),
        lines: vec![format!("valid system: n = {}, {} modes", doc.n, doc.modes)],
    })
}

fn run_equilibria(job: &JobSpec) -> Result<Success, CliError> {
    let plant = load_plant(job)?;
    let (spec, decomp) = equilibria::solve_equilibrium_with_tol(
        &plant.system,
        &plant.lambda,
        &plant.target,
        equilibria::DEFAULT_RANK_TOL,
    )?;
    let (a_l, _) = convex_combination(&plant.system, &plant.lambda)
        .map_err(|e| CliError::Parse(e.to_string()))?;
    let x_e = spec.x_e_vec();
    let ell = equilibria::residual_terms(&plant.system, &x_e);
    let shared = equilibria::detect_shared_subset(&plant.system, &decomp);
    let m_mat = equilibria::compute_m(&a_l, &decomp)?;
    let interior = equilibria::check_interior_condition(&m_mat, &ell, &shared);
    let diagnostic = equilibria::diagnose_no_global_exponential(&ell, &decomp);
    let doc = json!({
        "equilibrium": spec,
        "v_bar": linalg::to_rows(&decomp.v_bar),
        "v_perp": linalg::to_rows(&decomp.v_perp),
        "m": decomp.m,
        "shared_modes": shared.iter().map(|i| i + 1).collect::<Vec<_>>(),
        "interior": interior,
        "no_global_exponential": diagnostic,
    });
    let out = write_atomic(&job.out_dir, "equilibrium.json", &json_bytes(&doc)?)?;
    Ok(Success {
        artifacts: vec![out],
        lines: vec![
            format!("x_e = {:?}", spec.x_e),
            format!("nullspace dimension m = {}", decomp.m),
            format!("interior condition valid: {}", interior.valid),
        ],
        summary: json!({ "x_e": spec.x_e, "m": decomp.m, "interior_valid": interior.valid }),
    })
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn certificate_summary(law: &SwitchingLaw) -> (Value, Vec<String>) {
    let eig = linalg::sym_eigenvalues(&law.certificate.p);
    let dec = linalg::sym_eigenvalues(&law.certificate.decrease_block());
    (
        json!({ "p_eigenvalues": eig, "decrease_eigenvalues": dec, "x_e": law.certificate.equilibrium.x_e }),
        vec![
            format!("certificate verified; eig(P) = {}", fmt_vec(&eig)),
            format!("eig(He(S̄A_λV̄)) = {}", fmt_vec(&dec)),
        ],
    )
}

fn run_design(job: &JobSpec) -> Result<Success, CliError> {
    let plant = load_plant(job)?;
    let law = design(job, &plant)?;
    let out = write_atomic(
        &job.out_dir,
        "certificate.json",
        &json_bytes(&CertificateDocument::new(&law))?,
    )?;
    let (summary, lines) = certificate_summary(&law);
    Ok(Success {
        artifacts: vec![out],
        summary,
        lines,
    })
}

fn simulation_config(
    job: &JobSpec,
    plant: &Plant,
    law: &SwitchingLaw,
) -> Result<SimulationConfig, CliError> {
    let mut cfg = match &plant.fixture {
        Some(f) => f.simulation.clone(),
        None => {
            let x0 = job
                .simulation
                .x0
                .clone()
                .ok_or_else(|| CliError::Parse("--x0 is required with --system".into()))?;
            SimulationConfig::new(DVector::from_vec(x0), 1e-3, 10.0)
        }
    };
    if let Some(x0) = &job.simulation.x0 {
        cfg.x0 = DVector::from_vec(x0.clone());
    }
    if let Some(h) = job.simulation.step {
        cfg.step = h;
    }
    if let Some(t) = job.simulation.horizon {
        cfg.horizon = t;
        cfg.reference_schedule.retain(|e| e.time <= t);
    }
    cfg.validate(law.n())?;
    Ok(cfg)
}

fn simulate_into(
    job: &JobSpec,
    plant: &Plant,
    law: &SwitchingLaw,
    ok: &mut Success,
) -> Result<(), CliError> {
    let cfg = simulation_config(job, plant, law)?;
    let traj = simulate::simulate_closed_loop(law, &cfg)?;
    let mut csv_buf = Vec::new();
    simulate::write_csv(&traj, &mut csv_buf)?;
    let mut ev_buf = Vec::new();
    simulate::write_events(&traj, &mut ev_buf)?;
    let target = traj.target_at(traj.len() - 1).clone();
    let metrics = simulate::metrics(&traj, &target);
    ok.artifacts
        .push(write_atomic(&job.out_dir, "trajectory.csv", &csv_buf)?);
    ok.artifacts
        .push(write_atomic(&job.out_dir, "events.jsonl", &ev_buf)?);
    ok.artifacts.push(write_atomic(
        &job.out_dir,
        "metrics.json",
        &json_bytes(&metrics)?,
    )?);
    ok.lines.push(format!(
        "simulated {} samples, {} switches, final error {:.3e}",
        traj.len(),
        traj.switch_count,
        metrics.final_error
    ));
    ok.summary["metrics"] =
        serde_json::to_value(&metrics).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn run_simulate(job: &JobSpec) -> Result<Success, CliError> {
    let plant = load_plant(job)?;
    let law = design(job, &plant)?;
    let cert = write_atomic(
        &job.out_dir,
        "certificate.json",
        &json_bytes(&CertificateDocument::new(&law))?,
    )?;
    let (summary, lines) = certificate_summary(&law);
    let mut ok = Success {
        artifacts: vec![cert],
        summary,
        lines,
    };
    simulate_into(job, &plant, &law, &mut ok)?;
    Ok(ok)
}

fn run_rate(job: &JobSpec) -> Result<Success, CliError> {
    let plant = load_plant(job)?;
    let law = design(job, &plant)?;
    let opts = RateOptions {
        beta: job.rate.beta,
        general_g: job.rate.general_g,
        ..RateOptions::default()
    };
    let radii = job.rate.radii.clone().unwrap_or_else(|| vec![1.0]);
    if let Some(bad) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(CliError::Parse(format!(
            "squared radius must be positive, got {bad}"
        )));
    }
    let levels: Vec<f64> = radii
        .iter()
        .map(|&rr| rate::level_from_radius(&law, rr))
        .collect();
    let results = rate::certify_levels(&law, &levels, &opts);
    let points: Vec<CurvePoint> = results
        .iter()
        .zip(&levels)
        .map(|(res, &r)| CurvePoint::from_result(r, res))
        .collect();
    if let Some(Err(first)) = results
        .iter()
        .find(|r| r.is_err())
        .filter(|_| results.iter().all(|r| r.is_err()))
    {
        return Err(first.clone().into());
    }
    let mut csv_buf = Vec::new();
    rate::write_curve_csv(&mut csv_buf, &points).map_err(|e| CliError::Io(e.to_string()))?;
    let docs: Vec<Value> = results
        .iter()
        .zip(&radii)
        .map(|(res, &rr)| match res {
            Ok(c) => json!({ "radius_sq": rr, "certificate": RateDocument::new(c) }),
            Err(e) => {
                json!({ "radius_sq": rr, "error": e.to_string(), "hypothesis": e.hypothesis() })
            }
        })
        .collect();
    let p_max = linalg::s_max(&law.certificate.p);
    let report = json!({ "s_max_p": p_max, "levels": docs });
    let artifacts = vec![
        write_atomic(&job.out_dir, "alpha_curve.csv", &csv_buf)?,
        write_atomic(&job.out_dir, "rate.json", &json_bytes(&report)?)?,
    ];
    let mut lines = vec![format!(
        "{:>10} {:>12} {:>10} {:>12}",
        "R", "beta", "epsilon", "alpha"
    )];
    for (p, rr) in points.iter().zip(&radii) {
        lines.push(match &p.error {
            None => format!(
                "{rr:>10.4} {:>12.5e} {:>10.4} {:>12.5e}",
                p.beta, p.epsilon, p.alpha
            ),
            Some(e) => format!("{rr:>10.4} failed: {e}"),
        });
    }
    let failures = points.iter().filter(|p| p.error.is_some()).count();
    Ok(Success {
        artifacts,
        summary: json!({ "levels": points.len(), "failures": failures }),
        lines,
    })
}

fn run_demo(job: &JobSpec) -> Result<Success, CliError> {
    let plant = load_plant(job)?;
    let f = plant.fixture.clone().expect("demo source");
    let mut ok = Success {
        artifacts: Vec::new(),
        summary: json!({ "demo": f.name }),
        lines: vec![format!("demo {}", f.name)],
    };
    let mut published = None;
    if let Some(replay) = f.published_law() {
        let doc = match &replay {
            Ok(law) => {
                let rep = verify_certificate(law);
                if rep.valid {
                    published = Some(law.clone());
                }
                json!({ "valid": rep.valid, "report": rep })
            }
            Err(e) => json!({ "valid": false, "error": e.to_string() }),
        };
        ok.artifacts.push(write_atomic(
            &job.out_dir,
            "reference.json",
            &json_bytes(&doc)?,
        )?);
        ok.lines.push(format!(
            "published certificate valid: {}",
            published.is_some()
        ));
    }
    let law = design(job, &plant)?;
    ok.artifacts.push(write_atomic(
        &job.out_dir,
        "certificate.json",
        &json_bytes(&CertificateDocument::new(&law))?,
    )?);
    let (summary, lines) = certificate_summary(&law);
    ok.summary["certificate"] = summary;
    ok.lines.extend(lines);
    if job.simulation.enabled {
        let (sim_law, which) = match &published {
            Some(p) => (p, "published"),
            None => (&law, "designed"),
        };
        ok.lines.push(format!("simulating the {which} certificate"));
        ok.summary["simulated_certificate"] = json!(which);
        simulate_into(job, &plant, sim_law, &mut ok)?;
    }
    Ok(ok)
}

/// Run a job: write artifacts and `report.json`, print a summary, return the
/// exit code.
pub fn run(job: &JobSpec) -> i32 {
    let result = match job.command {
        CommandKind::Validate => run_validate(job),
        CommandKind::Equilibria => run_equilibria(job),
        CommandKind::Design => run_design(job),
        CommandKind::Simulate => run_simulate(job),
        CommandKind::Rate => run_rate(job),
        CommandKind::Demo => run_demo(job),
    };
    let (code, report) = match &result {
        Ok(ok) => (
            0,
            json!({
                "command": job.command,
                "status": "ok",
                "exit_code": 0,
                "artifacts": ok.artifacts.iter().filter_map(|p| p.file_name()).map(|s| s.to_string_lossy()).collect::<Vec<_>>(),
                "summary": ok.summary,
            }),
        ),
        Err(e) => (
            e.exit_code(),
            json!({
                "command": job.command,
                "status": "error",
                "exit_code": e.exit_code(),
                "hypothesis": e.hypothesis(),
                "message": e.message(),
            }),
        ),
    };
    match &result {
        Ok(ok) => {
            for l in &ok.lines {
                println!("{l}");
            }
        }
        Err(e) => match e.hypothesis() {
            Some(name) => eprintln!("hypothesis failed: {name}: {}", e.message()),
            None => eprintln!("error: {}", e.message()),
        },
    }
    // a report that cannot be written turns success into an I/O failure
    match json_bytes(&report).and_then(|b| write_atomic(&job.out_dir, "report.json", &b)) {
        Ok(_) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            if code == 0 {
                1
            } else {
                code
            }
        }
    }
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match JobSpec::from_cli(cli) {
        Ok(job) => run(&job),
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
