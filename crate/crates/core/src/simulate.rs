//! Sampled closed-loop simulation of the switched plant under the argmin law.
//!
//! The mode is chosen at every sample `t_k = k·h` and frozen over
//! `[t_k, t_k + h)`, so each step integrates a smooth affine field.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::design::{DesignError, SwitchingLaw};
use crate::sysmodel::{evaluate_disturbance, DisturbanceProfile};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("state diverged at t = {time} (step {step})")]
    Divergence { time: f64, step: usize },
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error("export failed: {0}")]
    Export(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Rk4,
    Euler,
}

/// New nullspace coordinates `x_e⊥` taking effect at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEvent {
    pub time: f64,
    pub x_perp: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub step: f64,
    pub horizon: f64,
    pub x0: DVector<f64>,
    pub integrator: Integrator,
    pub reference_schedule: Vec<ReferenceEvent>,
    pub disturbance: Option<DisturbanceProfile>,
}

impl SimulationConfig {
    pub fn new(x0: DVector<f64>, step: f64, horizon: f64) -> Self {
        Self {
            step,
            horizon,
            x0,
            integrator: Integrator::Rk4,
            reference_schedule: Vec::new(),
            disturbance: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), SimulationError> {
        let bad = |s: String| Err(SimulationError::InvalidConfig(s));
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step) {
            return bad(format!("horizon {} shorter than the step", self.horizon));
        }
        if self.x0.len() != n {
            return bad(format!("x0 has length {}, expected {n}", self.x0.len()));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return bad("x0 is not finite".into());
        }
        if self
            .reference_schedule
            .iter()
            .any(|e| e.time < 0.0 || e.time > self.horizon)
        {
            return bad("reference event outside [0, horizon]".into());
        }
        if self
            .reference_schedule
            .windows(2)
            .any(|w| w[1].time <= w[0].time)
        {
            return bad("reference events must have increasing times".into());
        }
        if let Some(d) = &self.disturbance {
            d.validate()
                .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
            if d.input_matrix.len() != n {
                return bad(format!(
                    "disturbance channel has length {}, expected {n}",
                    d.input_matrix.len()
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventRecord {
    pub time: f64,
    pub step: usize,
    pub kind: String,
    pub x_e: Vec<f64>,
    pub disturbance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// Mode applied on `[t_k, t_k + h)` (0-based).
    pub modes: Vec<usize>,
    pub lyapunov: Vec<f64>,
    /// Index into `targets` of the equilibrium in force at each sample.
    pub target_index: Vec<usize>,
    pub targets: Vec<DVector<f64>>,
    pub switch_count: usize,
    pub events: Vec<EventRecord>,
    pub step: f64,
    /// `ξ(0)` lies in the nullspace directions of the law.
    pub started_in_nullspace: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("non-empty trajectory")
    }

    /// Equilibrium in force at sample `k`.
    pub fn target_at(&self, k: usize) -> &DVector<f64> {
        &self.targets[self.target_index[k]]
    }
}

fn field(
    law: &SwitchingLaw,
    mode: usize,
    x: &DVector<f64>,
    dist: &Option<(DVector<f64>, f64)>,
) -> DVector<f64> {
    let mut dx = law.system.field(mode, x);
    if let Some((e, d)) = dist {
        if *d != 0.0 {
            dx += e * *d;
        }
    }
    dx
}

fn disturbance_at(profile: &Option<DisturbanceProfile>, t: f64) -> Option<(DVector<f64>, f64)> {
    profile
        .as_ref()
        .map(|p| (p.input_vector(), evaluate_disturbance(p, t)))
}

/// Simulate `x' = A_σx + b_σ + E·d(t)` with `σ` chosen by the law at each sample.
pub fn simulate_closed_loop(
    law: &SwitchingLaw,
    config: &SimulationConfig,
) -> Result<Trajectory, SimulationError> {
    let n = law.n();
    config.validate(n)?;
    let h = config.step;
    let n_steps = (config.horizon / h).round() as usize;
    let mut law_cur = law.clone();
    let mut targets = vec![law.x_e()];
    let mut events = Vec::new();
    let mut next_event = 0;
    let mut x = config.x0.clone();

    let xi0 = &x - law.x_e();
    let d = &law.certificate.decomp;
    let started_in_nullspace = (d.v_bar.transpose() * &xi0).norm() <= 1e-12 * (1.0 + xi0.norm());

    let mut traj = Trajectory {
        times: Vec::with_capacity(n_steps + 1),
        states: Vec::with_capacity(n_steps + 1),
        modes: Vec::with_capacity(n_steps + 1),
        lyapunov: Vec::with_capacity(n_steps + 1),
        target_index: Vec::with_capacity(n_steps + 1),
        targets: Vec::new(),
        switch_count: 0,
        events: Vec::new(),
        step: h,
        started_in_nullspace,
    };
    let mut prev: Option<usize> = None;
    let mut last_dist = config
        .disturbance
        .as_ref()
        .map(|p| evaluate_disturbance(p, 0.0));
    for k in 0..=n_steps {
        let t = k as f64 * h;
        while next_event < config.reference_schedule.len()
            && config.reference_schedule[next_event].time <= t + 1e-9 * h
        {
            let ev = &config.reference_schedule[next_event];
            law_cur = law_cur.with_reference(&ev.x_perp)?;
            targets.push(law_cur.x_e());
            events.push(EventRecord {
                time: t,
                step: k,
                kind: "reference".into(),
                x_e: law_cur.certificate.equilibrium.x_e.clone(),
                disturbance: last_dist.unwrap_or(0.0),
            });
            next_event += 1;
        }
        if let Some(p) = &config.disturbance {
            let dv = evaluate_disturbance(p, t);
            if Some(dv) != last_dist {
                events.push(EventRecord {
                    time: t,
                    step: k,
                    kind: "disturbance".into(),
                    x_e: law_cur.certificate.equilibrium.x_e.clone(),
                    disturbance: dv,
                });
                last_dist = Some(dv);
            }
        }
        let v = law_cur.lyapunov_value(&x);
        let sigma = law_cur.select_mode(&x, prev);
        if prev.is_some_and(|p| p != sigma) {
            traj.switch_count += 1;
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.modes.push(sigma);
        traj.lyapunov.push(v);
        traj.target_index.push(targets.len() - 1);
        if k == n_steps {
            break;
        }
        x = match config.integrator {
            Integrator::Euler => {
                let dist = disturbance_at(&config.disturbance, t);
                &x + field(&law_cur, sigma, &x, &dist) * h
            }
            Integrator::Rk4 => {
                let d0 = disturbance_at(&config.disturbance, t);
                let dm = disturbance_at(&config.disturbance, t + 0.5 * h);
                let d1 = disturbance_at(&config.disturbance, t + h);
                let k1 = field(&law_cur, sigma, &x, &d0);
                let k2 = field(&law_cur, sigma, &(&x + &k1 * (0.5 * h)), &dm);
                let k3 = field(&law_cur, sigma, &(&x + &k2 * (0.5 * h)), &dm);
                let k4 = field(&law_cur, sigma, &(&x + &k3 * h), &d1);
                &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
            }
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimulationError::Divergence {
                time: t + h,
                step: k + 1,
            });
        }
        prev = Some(sigma);
    }
    traj.targets = targets;
    traj.events = events;
    Ok(traj)
}

/// Run independent simulations on scoped threads, preserving order.
pub fn simulate_batch(
    jobs: &[(&SwitchingLaw, &SimulationConfig)],
) -> Vec<Result<Trajectory, SimulationError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|(law, cfg)| s.spawn(move || simulate_closed_loop(law, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub final_error: f64,
    /// First time after which `‖x − x_e‖` stays inside the band; `None` if it never settles.
    pub settling_time: Option<f64>,
    pub band: f64,
    pub switch_count: usize,
    /// Largest `v(t_{k+1}) − v(t_k)` over steps without a reference change.
    pub max_v_jump: f64,
}

/// Summary against `x_e` with a settling band of 2 % of the initial error.
pub fn metrics(traj: &Trajectory, x_e: &DVector<f64>) -> Metrics {
    let e0 = (&traj.states[0] - x_e).norm();
    metrics_with_band(traj, x_e, 0.02 * e0)
}

pub fn metrics_with_band(traj: &Trajectory, x_e: &DVector<f64>, band: f64) -> Metrics {
    let errors: Vec<f64> = traj.states.iter().map(|s| (s - x_e).norm()).collect();
    let final_error = errors.last().copied().unwrap_or(0.0);
    let settling_time = match errors.iter().rposition(|&e| e > band) {
        None => Some(traj.times.first().copied().unwrap_or(0.0)),
        Some(k) if k + 1 < errors.len() => Some(traj.times[k + 1]),
        Some(_) => None,
    };
    Metrics {
        final_error,
        settling_time,
        band,
        switch_count: traj.switch_count,
        max_v_jump: max_v_jump(traj),
    }
}

/// Largest positive step of the sampled Lyapunov sequence, ignoring steps
/// across which the reference changed.
pub fn max_v_jump(traj: &Trajectory) -> f64 {
    (1..traj.len())
        .filter(|&k| traj.target_index[k] == traj.target_index[k - 1])
        .map(|k| traj.lyapunov[k] - traj.lyapunov[k - 1])
        .fold(0.0_f64, f64::max)
}

/// First time `‖x − x_e‖` drops to half its initial value.
pub fn half_time(traj: &Trajectory, x_e: &DVector<f64>) -> Option<f64> {
    let e0 = (&traj.states[0] - x_e).norm();
    traj.states
        .iter()
        .position(|s| (s - x_e).norm() <= 0.5 * e0)
        .map(|k| traj.times[k])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SpeedCheck {
    Pass {
        max_speed: f64,
        bound: f64,
    },
    Fail {
        max_speed: f64,
        bound: f64,
        time: f64,
    },
    NotApplicable,
}

/// Finite-difference speed `‖x_{k+1} − x_k‖/h` against `ℓ̄ + 10hℓ̄ + 1e-9`
/// for trajectories started in the nullspace.
pub fn speed_bound_check(traj: &Trajectory, ell_bar: f64) -> SpeedCheck {
    if !traj.started_in_nullspace {
        return SpeedCheck::NotApplicable;
    }
    let h = traj.step;
    let bound = ell_bar + 10.0 * h * ell_bar + 1e-9;
    let mut max_speed = 0.0_f64;
    for k in 1..traj.len() {
        let speed =
            (&traj.states[k] - &traj.states[k - 1]).norm() / (traj.times[k] - traj.times[k - 1]);
        max_speed = max_speed.max(speed);
        if speed > bound {
            return SpeedCheck::Fail {
                max_speed: speed,
                bound,
                time: traj.times[k - 1],
            };
        }
    }
    SpeedCheck::Pass { max_speed, bound }
}

/// CSV with header `t,x1..xn,sigma,v`; `sigma` is 1-based.
pub fn write_csv<W: Write>(traj: &Trajectory, out: W) -> Result<(), SimulationError> {
    let n = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.push("sigma".into());
    header.push("v".into());
    w.write_record(&header)
        .map_err(|e| SimulationError::Export(e.to_string()))?;
    for k in 0..traj.len() {
        let mut rec = vec![traj.times[k].to_string()];
        rec.extend(traj.states[k].iter().map(|v| v.to_string()));
        rec.push((traj.modes[k] + 1).to_string());
        rec.push(traj.lyapunov[k].to_string());
        w.write_record(&rec)
            .map_err(|e| SimulationError::Export(e.to_string()))?;
    }
    w.flush()
        .map_err(|e| SimulationError::Export(e.to_string()))
}

/// One JSON object per event and line.
pub fn write_events<W: Write>(traj: &Trajectory, mut out: W) -> Result<(), SimulationError> {
    for e in &traj.events {
        let line = serde_json::to_string(e).map_err(|e| SimulationError::Export(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| SimulationError::Export(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::SwitchingLaw;
    use crate::fixtures;

    fn example1_law() -> SwitchingLaw {
        let f = fixtures::example1();
        let r = f.reference.unwrap();
        SwitchingLaw::from_blocks(&f.system, &f.lambda, &f.target, r.p_bar, r.p_perp).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = SimulationConfig::new(DVector::zeros(2), 0.0, 1.0);
        assert!(c.validate(2).is_err());
        c.step = 0.1;
        assert!(c.validate(2).is_ok());
        assert!(c.validate(3).is_err());
        c.horizon = 0.01;
        assert!(c.validate(2).is_err());
    }

    #[test]
    fn equilibrium_start_stays_put() {
        let law = example1_law();
        let traj = simulate_closed_loop(&law, &SimulationConfig::new(DVector::zeros(2), 1e-3, 1.0))
            .unwrap();
        // the law chatters around x_e with amplitude of order h
        assert!(traj.states.iter().all(|s| s.norm() <= 2e-3));
        assert!(traj.lyapunov.iter().all(|&v| v <= 1e-5));
    }

    #[test]
    fn constant_trajectory_metrics() {
        let law = example1_law();
        let mut traj =
            simulate_closed_loop(&law, &SimulationConfig::new(DVector::zeros(2), 0.5, 1.0))
                .unwrap();
        for s in traj.states.iter_mut() {
            s.fill(0.0);
        }
        traj.lyapunov.fill(0.0);
        let m = metrics(&traj, &DVector::zeros(2));
        assert_eq!(m.final_error, 0.0);
        assert_eq!(m.settling_time, Some(0.0));
        assert_eq!(m.max_v_jump, 0.0);
    }

    #[test]
    fn example1_converges() {
        let law = example1_law();
        let traj = simulate_closed_loop(
            &law,
            &SimulationConfig::new(DVector::from_vec(vec![-4.0, 5.0]), 1e-3, 12.0),
        )
        .unwrap();
        assert!(traj.final_state().norm() < 0.05, "{}", traj.final_state());
    }

    #[test]
    fn speed_check_cases() {
        let law = example1_law();
        let traj = simulate_closed_loop(
            &law,
            &SimulationConfig::new(DVector::from_vec(vec![3.0, 0.0]), 1e-3, 5.0),
        )
        .unwrap();
        assert!(matches!(
            speed_bound_check(&traj, 1.0),
            SpeedCheck::Pass { .. }
        ));
        let traj = simulate_closed_loop(
            &law,
            &SimulationConfig::new(DVector::from_vec(vec![3.0, 1.0]), 1e-3, 1.0),
        )
        .unwrap();
        assert_eq!(speed_bound_check(&traj, 1.0), SpeedCheck::NotApplicable);
    }

    #[test]
    fn linear_system_is_frozen_in_nullspace() {
        let f = fixtures::example1();
        let sys = crate::sysmodel::SwitchedAffineSystem::new(
            f.system.a_all().to_vec(),
            vec![DVector::zeros(2); 3],
        )
        .unwrap();
        let law = SwitchingLaw::from_blocks(
            &sys,
            &f.lambda,
            &f.target,
            nalgebra::DMatrix::from_element(1, 1, 1.5),
            nalgebra::DMatrix::from_element(1, 1, 1.0),
        );
        // the interior condition fails without affine terms
        assert!(law.is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[0., 0., 0., 1e3]);
        let sys = crate::sysmodel::SwitchedAffineSystem::new(
            vec![a.clone(), a.clone(), a],
            fixtures::example1_system().b_all().to_vec(),
        )
        .unwrap();
        let f = fixtures::example1();
        let law = example1_law();
        let mut bad = law.clone();
        bad.system = sys;
        let _ = f;
        let err = simulate_closed_loop(
            &bad,
            &SimulationConfig::new(DVector::from_vec(vec![0.0, 1.0]), 0.01, 10.0),
        );
        assert!(matches!(err, Err(SimulationError::Divergence { .. })));
    }

    #[test]
    fn csv_header_and_events() {
        let law = example1_law();
        let mut cfg = SimulationConfig::new(DVector::from_vec(vec![-1.0, 1.0]), 0.1, 0.3);
        cfg.reference_schedule.push(ReferenceEvent {
            time: 0.2,
            x_perp: DVector::from_element(1, 1.0),
        });
        let traj = simulate_closed_loop(&law, &cfg).unwrap();
        let mut buf = Vec::new();
        write_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,x1,x2,sigma,v");
        assert_eq!(text.lines().count(), traj.len() + 1);
        let mut ev = Vec::new();
        write_events(&traj, &mut ev).unwrap();
        let line = String::from_utf8(ev).unwrap();
        assert!(line.contains("\"reference\""));
        assert_eq!(traj.targets.len(), 2);
        assert_eq!(traj.target_at(traj.len() - 1)[0], 1.0);
    }

    #[test]
    fn deterministic_runs() {
        let law = example1_law();
        let cfg = SimulationConfig::new(DVector::from_vec(vec![-4.0, 5.0]), 1e-2, 3.0);
        let a = simulate_closed_loop(&law, &cfg).unwrap();
        let b = simulate_closed_loop(&law, &cfg).unwrap();
        assert_eq!(a, b);
    }
}
