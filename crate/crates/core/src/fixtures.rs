//! Built-in plants used by the demos and the test-suite.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::design::{verify_certificate, DesignError, DesignObjective, SwitchingLaw};
use crate::equilibria::EquilibriumTarget;
use crate::simulate::{Integrator, ReferenceEvent, SimulationConfig};
use crate::sysmodel::{
    build_dc_motor, motor_velocity_operating_point, DisturbanceProfile, MotorMode, MotorParams,
    SimplexVector, SwitchedAffineSystem,
};

pub const DEMO_NAMES: [&str; 4] = ["example1", "example2", "motor-position", "motor-velocity"];

/// Published Lyapunov blocks for a fixture, in `[V̄ V⊥]` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCertificate {
    pub p_bar: DMatrix<f64>,
    pub p_perp: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub name: &'static str,
    pub system: SwitchedAffineSystem,
    pub lambda: SimplexVector,
    pub target: EquilibriumTarget,
    pub reference: Option<ReferenceCertificate>,
    /// Objective used when the demo designs its own certificate.
    pub objective: DesignObjective,
    pub simulation: SimulationConfig,
}

impl Fixture {
    /// Law built from the published blocks, whether or not they verify.
    pub fn published_law(&self) -> Option<Result<SwitchingLaw, DesignError>> {
        self.reference.as_ref().map(|r| {
            SwitchingLaw::from_blocks(
                &self.system,
                &self.lambda,
                &self.target,
                r.p_bar.clone(),
                r.p_perp.clone(),
            )
        })
    }

    /// The published law when it passes every check. Demos simulate this one
    /// so the trajectories match the published figures.
    pub fn verified_published_law(&self) -> Option<SwitchingLaw> {
        match self.published_law()? {
            Ok(law) if verify_certificate(&law).valid => Some(law),
            _ => None,
        }
    }
}

pub fn by_name(name: &str) -> Option<Fixture> {
    match name {
        "example1" => Some(example1()),
        "example2" => Some(example2()),
        "motor-position" => Some(motor_position()),
        "motor-velocity" => Some(motor_velocity()),
        _ => None,
    }
}

pub fn all() -> Vec<Fixture> {
    DEMO_NAMES.iter().filter_map(|n| by_name(n)).collect()
}

/// Two integrators and one stable mode sharing the nullspace `span{e1}`.
pub fn example1_system() -> SwitchedAffineSystem {
    let z = DMatrix::zeros(2, 2);
    let a3 = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1.]);
    SwitchedAffineSystem::new(
        vec![z.clone(), z, a3],
        vec![
            DVector::from_vec(vec![-1.0, 0.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::zeros(2),
        ],
    )
    .expect("valid fixture")
}

pub fn example1() -> Fixture {
    Fixture {
        name: "example1",
        system: example1_system(),
        lambda: SimplexVector::uniform(3),
        target: EquilibriumTarget::Perp(DVector::zeros(1)),
        reference: Some(ReferenceCertificate {
            p_bar: DMatrix::from_element(1, 1, 1.5),
            p_perp: DMatrix::from_element(1, 1, 1.0),
        }),
        objective: DesignObjective::MaxMargin,
        simulation: SimulationConfig {
            step: 1e-4,
            horizon: 12.0,
            x0: DVector::from_vec(vec![-4.0, 5.0]),
            integrator: Integrator::Rk4,
            reference_schedule: Vec::new(),
            disturbance: None,
        },
    }
}

/// Three marginally stable modes with a common zero third column.
pub fn example2_system() -> SwitchedAffineSystem {
    let a1 = DMatrix::from_row_slice(3, 3, &[-6., 5., 0., 2., -7., 0., -2., 0., 0.]);
    let a2 = DMatrix::from_row_slice(3, 3, &[-6., 2., 0., 2., -7., 0., 2., 3., 0.]);
    let a3 = DMatrix::from_row_slice(3, 3, &[-3., -1., 0., -1., -1., 0., 2., -3., 0.]);
    SwitchedAffineSystem::new(
        vec![a1, a2, a3],
        vec![
            DVector::from_vec(vec![1., -1., 0.]),
            DVector::from_vec(vec![-1., 1., 2.]),
            DVector::from_vec(vec![0., 0., -2.]),
        ],
    )
    .expect("valid fixture")
}

pub fn example2() -> Fixture {
    Fixture {
        name: "example2",
        system: example2_system(),
        lambda: SimplexVector::uniform(3),
        target: EquilibriumTarget::Perp(DVector::zeros(1)),
        reference: Some(ReferenceCertificate {
            p_bar: DMatrix::from_row_slice(2, 2, &[1.1989e-3, -0.0046e-3, -0.0046e-3, 1.2087e-3]),
            p_perp: DMatrix::from_element(1, 1, 1.1542e-3),
        }),
        objective: DesignObjective::MinCondition { floor: 1e-3 },
        simulation: SimulationConfig {
            step: 1e-3,
            horizon: 10.0,
            x0: DVector::from_vec(vec![1.0, -1.0, 1.0]),
            integrator: Integrator::Rk4,
            reference_schedule: Vec::new(),
            disturbance: None,
        },
    }
}

/// Shaft-angle schedule: `π, 2π, −π, 0`, one level per second.
pub fn motor_position_schedule() -> Vec<ReferenceEvent> {
    [PI, 2.0 * PI, -PI, 0.0]
        .iter()
        .enumerate()
        .map(|(k, &theta)| ReferenceEvent {
            time: k as f64,
            x_perp: DVector::from_element(1, theta),
        })
        .collect()
}

pub fn motor_position() -> Fixture {
    let system =
        build_dc_motor(&MotorParams::default(), MotorMode::Position).expect("valid parameters");
    let mut w = vec![0.0; 8];
    w[..4].fill(0.25);
    Fixture {
        name: "motor-position",
        system,
        lambda: SimplexVector::new(w).expect("simplex"),
        target: EquilibriumTarget::Perp(DVector::zeros(1)),
        reference: Some(ReferenceCertificate {
            p_bar: DMatrix::from_row_slice(
                3,
                3,
                &[
                    1.4953e-3, 1.1691e-3, 0.0, 1.1691e-3, 3.7599e-3, 0.0, 0.0, 0.0, 1.2560e-3,
                ],
            ),
            p_perp: DMatrix::from_element(1, 1, 2.0007),
        }),
        objective: DesignObjective::MaxMargin,
        simulation: SimulationConfig {
            step: 1e-5,
            horizon: 4.0,
            x0: DVector::zeros(4),
            integrator: Integrator::Rk4,
            reference_schedule: motor_position_schedule(),
            disturbance: None,
        },
    }
}

/// Velocity reference of the integral-action fixture (rad/s).
pub const MOTOR_OMEGA_REF: f64 = 200.0;

/// Published weights of the velocity problem (modes 7 and 8).
pub fn motor_velocity_published_lambda() -> SimplexVector {
    let mut w = vec![0.0; 8];
    w[6] = 0.625;
    w[7] = 0.375;
    SimplexVector::new(w).expect("simplex")
}

/// Published equilibrium of the velocity problem.
pub fn motor_velocity_published_xe() -> DVector<f64> {
    DVector::from_vec(vec![7.6202, 29.9719, 200.0034, 0.0])
}

/// Load-torque steps entering the shaft equation as `−τ/J`.
pub fn motor_velocity_disturbance() -> DisturbanceProfile {
    let j = MotorParams::default().j;
    DisturbanceProfile::new(
        vec![0.0, 0.0, -1.0 / j, 0.0],
        vec![0.5, 1.0],
        vec![0.0, 5e-4, -2.5e-4],
    )
    .expect("valid profile")
}

/// Integral-action velocity loop at the operating point computed from the
/// plant parameters for `ω = 200 rad/s`.
pub fn motor_velocity() -> Fixture {
    let params = MotorParams::default();
    let system = build_dc_motor(
        &params,
        MotorMode::Velocity {
            omega_ref: MOTOR_OMEGA_REF,
        },
    )
    .expect("valid parameters");
    Fixture {
        name: "motor-velocity",
        system,
        lambda: motor_velocity_operating_point(&params, MOTOR_OMEGA_REF).expect("operating point"),
        target: EquilibriumTarget::Perp(DVector::zeros(1)),
        reference: Some(ReferenceCertificate {
            p_bar: DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0142, 0.0057, 0.0068, 0.0057, 0.0108, 0.0027, 0.0068, 0.0027, 0.0048,
                ],
            ),
            p_perp: DMatrix::from_element(1, 1, 18.7476),
        }),
        objective: DesignObjective::MinCondition { floor: 1e-3 },
        simulation: SimulationConfig {
            step: 2e-6,
            horizon: 1.5,
            x0: DVector::zeros(4),
            integrator: Integrator::Rk4,
            reference_schedule: Vec::new(),
            disturbance: Some(motor_velocity_disturbance()),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for n in DEMO_NAMES {
            assert_eq!(by_name(n).unwrap().name, n);
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn velocity_weights_on_modes_seven_and_eight() {
        let f = motor_velocity();
        let w = f.lambda.weights();
        assert!(w[..6].iter().all(|&v| v == 0.0));
        assert!((w[7] - 0.18020).abs() < 1e-4);
    }
}
