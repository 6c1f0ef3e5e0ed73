//! Switched affine plants `x' = A_σ x + b_σ`, simplex weights and derived systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

/// Tolerance on `|Σλ_i − 1|` accepted when building a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("invalid system: {0}")]
    Invalid(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("not a simplex point: {0}")]
    NotSimplex(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// A family of `N ≥ 2` affine vector fields sharing the state dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedAffineSystem {
    n: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    labels: Option<Vec<String>>,
}

impl SwitchedAffineSystem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self, SystemError> {
        Self::with_labels(a, b, None)
    }

    pub fn with_labels(
        a: Vec<DMatrix<f64>>,
        b: Vec<DVector<f64>>,
        labels: Option<Vec<String>>,
    ) -> Result<Self, SystemError> {
        let doc = SystemDocument::from_parts(&a, &b, labels.clone());
        let report = validate_system(&doc);
        if !report.valid {
            return Err(SystemError::Invalid(report.issues.join("; ")));
        }
        let n = a[0].nrows();
        Ok(Self { n, a, b, labels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of modes `N`.
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    pub fn b(&self, i: usize) -> &DVector<f64> {
        &self.b[i]
    }

    pub fn a_all(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b_all(&self) -> &[DVector<f64>] {
        &self.b
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Vector field of mode `i` at `x`.
    pub fn field(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        &self.a[i] * x + &self.b[i]
    }

    pub fn to_document(&self) -> SystemDocument {
        SystemDocument::from_parts(&self.a, &self.b, self.labels.clone())
    }
}

impl TryFrom<SystemDocument> for SwitchedAffineSystem {
    type Error = SystemError;

    fn try_from(doc: SystemDocument) -> Result<Self, Self::Error> {
        let report = validate_system(&doc);
        if !report.valid {
            return Err(SystemError::Invalid(report.issues.join("; ")));
        }
        let a = doc.a.iter().map(|m| linalg::from_rows(m)).collect();
        let b = doc.b.iter().map(|v| DVector::from_vec(v.clone())).collect();
        Self::with_labels(a, b, doc.labels)
    }
}

/// JSON interchange form of a system. Matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub n: usize,
    #[serde(rename = "N")]
    pub modes: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
    pub b: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SystemDocument {
    fn from_parts(a: &[DMatrix<f64>], b: &[DVector<f64>], labels: Option<Vec<String>>) -> Self {
        Self {
            n: a.first().map(|m| m.nrows()).unwrap_or(0),
            modes: a.len(),
            a: a.iter().map(linalg::to_rows).collect(),
            b: b.iter().map(|v| v.iter().copied().collect()).collect(),
            labels,
        }
    }
}

/// Outcome of [`validate_system`]; `issues` is empty exactly when `valid`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub issues: Vec<String>,
}

/// Structural checks on a system document: mode count, square matrices of a
/// common size, vector lengths and finiteness. Never fails, only reports.
pub fn validate_system(doc: &SystemDocument) -> ValidationReport {
    let mut issues = Vec::new();
    let n = doc.n;
    if doc.a.len() < 2 {
        issues.push(format!("at least two modes required, got {}", doc.a.len()));
    }
    if doc.a.len() != doc.modes {
        issues.push(format!(
            "N = {} but {} matrices given",
            doc.modes,
            doc.a.len()
        ));
    }
    if doc.b.len() != doc.a.len() {
        issues.push(format!(
            "{} matrices but {} affine vectors",
            doc.a.len(),
            doc.b.len()
        ));
    }
    if n == 0 {
        issues.push("state dimension must be positive".into());
    }
    for (i, m) in doc.a.iter().enumerate() {
        if m.len() != n || m.iter().any(|row| row.len() != n) {
            let cols = m.first().map(|r| r.len()).unwrap_or(0);
            issues.push(format!(
                "dimension mismatch: A_{} is {}x{}, expected {n}x{n}",
                i + 1,
                m.len(),
                cols
            ));
        }
        if m.iter().flatten().any(|v| !v.is_finite()) {
            issues.push(format!("non-finite entry in A_{}", i + 1));
        }
    }
    for (i, v) in doc.b.iter().enumerate() {
        if v.len() != n {
            issues.push(format!(
                "dimension mismatch: b_{} has length {}, expected {n}",
                i + 1,
                v.len()
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            issues.push(format!("non-finite entry in b_{}", i + 1));
        }
    }
    if let Some(labels) = &doc.labels {
        if labels.len() != doc.a.len() {
            issues.push(format!("{} labels for {} modes", labels.len(), doc.a.len()));
        }
    }
    ValidationReport {
        valid: issues.is_empty(),
        issues,
    }
}

/// A point of the unit simplex. Weights are renormalised on construction;
/// the raw sum is kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplexVector {
    weights: Vec<f64>,
    raw_sum: f64,
}

impl SimplexVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, SystemError> {
        if weights.is_empty() {
            return Err(SystemError::NotSimplex("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(SystemError::NotSimplex(format!(
                "weight {w} is negative or non-finite"
            )));
        }
        let raw_sum: f64 = weights.iter().sum();
        if (raw_sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(SystemError::NotSimplex(format!("weights sum to {raw_sum}")));
        }
        let weights = weights.into_iter().map(|w| w / raw_sum).collect();
        Ok(Self { weights, raw_sum })
    }

    /// Unit vector `e_i` (0-based).
    pub fn vertex(n_modes: usize, i: usize) -> Self {
        let mut w = vec![0.0; n_modes];
        w[i] = 1.0;
        Self {
            weights: w,
            raw_sum: 1.0,
        }
    }

    pub fn uniform(n_modes: usize) -> Self {
        Self {
            weights: vec![1.0 / n_modes as f64; n_modes],
            raw_sum: 1.0,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn raw_sum(&self) -> f64 {
        self.raw_sum
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Combine an arbitrary family `X_i` with these weights.
    pub fn combine_matrices(&self, xs: &[DMatrix<f64>]) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(xs[0].nrows(), xs[0].ncols());
        for (w, x) in self.weights.iter().zip(xs) {
            if *w != 0.0 {
                acc += x * *w;
            }
        }
        acc
    }

    pub fn combine_vectors(&self, xs: &[DVector<f64>]) -> DVector<f64> {
        let mut acc = DVector::zeros(xs[0].len());
        for (w, x) in self.weights.iter().zip(xs) {
            if *w != 0.0 {
                acc += x * *w;
            }
        }
        acc
    }
}

/// `(A_λ, b_λ) = (Σλ_i A_i, Σλ_i b_i)`.
pub fn convex_combination(
    sys: &SwitchedAffineSystem,
    lambda: &SimplexVector,
) -> Result<(DMatrix<f64>, DVector<f64>), SystemError> {
    if lambda.len() != sys.modes() {
        return Err(SystemError::LengthMismatch {
            expected: sys.modes(),
            got: lambda.len(),
        });
    }
    Ok((
        lambda.combine_matrices(&sys.a),
        lambda.combine_vectors(&sys.b),
    ))
}

/// Append integrator states `z' = C x − y_ref` to every mode:
/// `Ã_i = [[A_i, 0], [C, 0]]`, `b̃_i = [b_i; −y_ref]`.
pub fn augment_with_integrator(
    sys: &SwitchedAffineSystem,
    c: &DMatrix<f64>,
    y_ref: &DVector<f64>,
) -> Result<SwitchedAffineSystem, SystemError> {
    let n = sys.n();
    if c.ncols() != n {
        return Err(SystemError::DimensionMismatch(format!(
            "C has {} columns, system has n = {n}",
            c.ncols()
        )));
    }
    if y_ref.len() != c.nrows() {
        return Err(SystemError::DimensionMismatch(format!(
            "y_ref has length {}, C has {} rows",
            y_ref.len(),
            c.nrows()
        )));
    }
    let mz = c.nrows();
    let a = sys
        .a
        .iter()
        .map(|ai| {
            let mut m = DMatrix::zeros(n + mz, n + mz);
            m.view_mut((0, 0), (n, n)).copy_from(ai);
            m.view_mut((n, 0), (mz, n)).copy_from(c);
            m
        })
        .collect();
    let b = sys
        .b
        .iter()
        .map(|bi| {
            let mut v = DVector::zeros(n + mz);
            v.rows_mut(0, n).copy_from(bi);
            v.rows_mut(n, mz).copy_from(&(-y_ref));
            v
        })
        .collect();
    SwitchedAffineSystem::with_labels(a, b, sys.labels.clone())
}

/// Electrical and mechanical parameters of the boost-converter / h-bridge /
/// dc-motor plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotorParams {
    /// Inductor resistance (Ω).
    pub r_l: f64,
    /// Inductance (H).
    pub l: f64,
    /// Capacitance (F).
    pub c: f64,
    /// Electric constant (V·s/rad).
    pub k_e: f64,
    /// Winding resistance (Ω).
    pub r_m: f64,
    /// Shaft inertia (kg·m²).
    pub j: f64,
    /// Viscous friction.
    pub friction: f64,
    /// Input voltage (V).
    pub v_dc: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        Self {
            r_l: 0.5,
            l: 1e-3,
            c: 2e-3,
            k_e: 5e-3,
            r_m: 1.0,
            j: 1e-6,
            friction: 1e-4,
            v_dc: 12.0,
        }
    }
}

impl MotorParams {
    pub fn validate(&self) -> Result<(), SystemError> {
        let named = [
            ("R_L", self.r_l),
            ("L", self.l),
            ("C", self.c),
            ("K_e", self.k_e),
            ("R_m", self.r_m),
            ("J", self.j),
            ("c", self.friction),
            ("v_dc", self.v_dc),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v > 0.0) {
                return Err(SystemError::InvalidParameter(format!(
                    "{name} = {v} must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Switch states `(u1, u2, u3)` of the eight modes, in mode order.
pub const MOTOR_SWITCH_TABLE: [(u8, u8, u8); 8] = [
    (0, 0, 0),
    (1, 0, 0),
    (0, 1, 0),
    (1, 1, 0),
    (0, 0, 1),
    (1, 0, 1),
    (0, 1, 1),
    (1, 1, 1),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotorMode {
    /// Fourth state is the shaft angle.
    Position,
    /// Fourth state integrates `ω − ω_ref`.
    Velocity { omega_ref: f64 },
}

fn motor_core_matrix(p: &MotorParams, (u1, u2, u3): (u8, u8, u8)) -> DMatrix<f64> {
    let (u1, u2, u3) = (u1 as f64, u2 as f64, u3 as f64);
    let coupling = (2.0 * u2 - 1.0) * u3 * p.k_e;
    DMatrix::from_row_slice(
        3,
        3,
        &[
            -p.r_l / p.l,
            -u1 / p.l,
            0.0,
            u1 / p.c,
            -u3 / (p.r_m * p.c),
            coupling / (p.r_m * p.c),
            0.0,
            coupling / (p.j * p.r_m),
            -(p.k_e * p.k_e + p.friction * p.r_m) / (p.j * p.r_m),
        ],
    )
}

/// The 8-mode, 4-state plant with state `[i_L, v_C, ω, θ or ∫(ω − ω_ref)]`.
pub fn build_dc_motor(
    params: &MotorParams,
    mode: MotorMode,
) -> Result<SwitchedAffineSystem, SystemError> {
    params.validate()?;
    let a: Vec<_> = MOTOR_SWITCH_TABLE
        .iter()
        .map(|&u| motor_core_matrix(params, u))
        .collect();
    let b = vec![DVector::from_vec(vec![params.v_dc / params.l, 0.0, 0.0]); 8];
    let labels = MOTOR_SWITCH_TABLE
        .iter()
        .map(|(u1, u2, u3)| format!("u={u1}{u2}{u3}"))
        .collect();
    let core = SwitchedAffineSystem::with_labels(a, b, Some(labels))?;
    let y_ref = match mode {
        MotorMode::Position => 0.0,
        MotorMode::Velocity { omega_ref } => omega_ref,
    };
    let c = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    augment_with_integrator(&core, &c, &DVector::from_element(1, y_ref))
}

/// Weights on modes 7 and 8 (both bridge legs conducting forward) that hold
/// the shaft at `omega_ref` in steady state, from the scalar balance
/// `κω·a² − v_dc·a + R_L ω (κ − K_e)/R_m = 0` with `κ = (K_e² + c R_m)/K_e`
/// and `a` the boost duty on mode 8.
pub fn motor_velocity_operating_point(
    params: &MotorParams,
    omega_ref: f64,
) -> Result<SimplexVector, SystemError> {
    params.validate()?;
    let kappa = (params.k_e * params.k_e + params.friction * params.r_m) / params.k_e;
    let qa = kappa * omega_ref;
    let qb = -params.v_dc;
    let qc = params.r_l * omega_ref * (kappa - params.k_e) / params.r_m;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 || qa == 0.0 {
        return Err(SystemError::InvalidParameter(format!(
            "no operating point on modes 7/8 for omega_ref = {omega_ref}"
        )));
    }
    let root = (-qb - disc.sqrt()) / (2.0 * qa);
    if !(0.0..=1.0).contains(&root) {
        return Err(SystemError::InvalidParameter(format!(
            "operating duty {root} outside [0, 1] for omega_ref = {omega_ref}"
        )));
    }
    let mut w = vec![0.0; 8];
    w[6] = 1.0 - root;
    w[7] = root;
    SimplexVector::new(w)
}

/// Additive disturbance `E·d(t)` with piecewise-constant, right-continuous `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceProfile {
    #[serde(rename = "E")]
    pub input_matrix: Vec<f64>,
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl DisturbanceProfile {
    pub fn new(
        input_matrix: Vec<f64>,
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self, SystemError> {
        let d = Self {
            input_matrix,
            breakpoints,
            values,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), SystemError> {
        if self.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SystemError::Invalid(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        if self.values.len() != self.breakpoints.len() + 1 {
            return Err(SystemError::LengthMismatch {
                expected: self.breakpoints.len() + 1,
                got: self.values.len(),
            });
        }
        if self
            .input_matrix
            .iter()
            .chain(&self.values)
            .chain(&self.breakpoints)
            .any(|v| !v.is_finite())
        {
            return Err(SystemError::Invalid("non-finite disturbance data".into()));
        }
        Ok(())
    }

    pub fn input_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.input_matrix.clone())
    }
}

/// Amplitude `d(t)`: the value of the interval containing `t`, breakpoints
/// belonging to the interval on their right.
pub fn evaluate_disturbance(d: &DisturbanceProfile, t: f64) -> f64 {
    let idx = d.breakpoints.partition_point(|&bp| bp <= t);
    d.values[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> SwitchedAffineSystem {
        let z = DMatrix::zeros(2, 2);
        let a3 = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1.]);
        SwitchedAffineSystem::new(
            vec![z.clone(), z, a3],
            vec![
                DVector::from_vec(vec![-1., 0.]),
                DVector::from_vec(vec![1., 0.]),
                DVector::zeros(2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn example1_is_valid() {
        assert!(validate_system(&example1().to_document()).valid);
    }

    #[test]
    fn rectangular_matrix_is_reported() {
        let mut doc = example1().to_document();
        doc.a[0] = vec![vec![0.0; 3]; 2];
        let r = validate_system(&doc);
        assert!(!r.valid);
        assert!(r.issues.iter().any(|s| s.contains("dimension mismatch")));
    }

    #[test]
    fn nan_is_reported() {
        let mut doc = example1().to_document();
        doc.b[1][0] = f64::NAN;
        let r = validate_system(&doc);
        assert!(!r.valid);
        assert!(r.issues.iter().any(|s| s.contains("non-finite")));
    }

    #[test]
    fn single_mode_is_rejected() {
        let doc = SystemDocument {
            n: 1,
            modes: 1,
            a: vec![vec![vec![0.0]]],
            b: vec![vec![1.0]],
            labels: None,
        };
        assert!(!validate_system(&doc).valid);
    }

    #[test]
    fn example1_uniform_combination() {
        let (a, b) = convex_combination(&example1(), &SimplexVector::uniform(3)).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1. / 3.]));
        assert!(b.norm() < 1e-15);
    }

    #[test]
    fn vertex_combination_returns_mode() {
        let sys = example1();
        let (a, b) = convex_combination(&sys, &SimplexVector::vertex(3, 0)).unwrap();
        assert_eq!(&a, sys.a(0));
        assert_eq!(&b, sys.b(0));
    }

    #[test]
    fn combination_length_mismatch() {
        let err = convex_combination(&example1(), &SimplexVector::uniform(2)).unwrap_err();
        assert_eq!(
            err,
            SystemError::LengthMismatch {
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn simplex_renormalises_and_rejects() {
        let s = SimplexVector::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((s.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(SimplexVector::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexVector::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn motor_position_entries() {
        let sys = build_dc_motor(&MotorParams::default(), MotorMode::Position).unwrap();
        assert_eq!(sys.modes(), 8);
        assert_eq!(sys.n(), 4);
        assert!((sys.a(0)[(0, 0)] + 500.0).abs() < 1e-12);
        for i in 0..8 {
            let a = sys.a(i);
            for r in 0..4 {
                assert_eq!(a[(r, 3)], 0.0);
            }
            assert_eq!(
                a.row(3).iter().copied().collect::<Vec<_>>(),
                vec![0., 0., 1., 0.]
            );
            assert_eq!(
                sys.b(i).iter().copied().collect::<Vec<_>>(),
                vec![12000., 0., 0., 0.]
            );
            // (1,2) entry is −u1/L
            let u1 = MOTOR_SWITCH_TABLE[i].0 as f64;
            assert_eq!(a[(0, 1)], -u1 / 1e-3);
        }
    }

    #[test]
    fn motor_velocity_affine_terms() {
        let sys = build_dc_motor(
            &MotorParams::default(),
            MotorMode::Velocity { omega_ref: 200.0 },
        )
        .unwrap();
        for i in 0..8 {
            assert_eq!(
                sys.b(i).iter().copied().collect::<Vec<_>>(),
                vec![12000., 0., 0., -200.]
            );
        }
    }

    #[test]
    fn motor_modes_differ_only_through_u3() {
        let sys = build_dc_motor(&MotorParams::default(), MotorMode::Position).unwrap();
        // entries that carry u3: (1,1), (1,2), (2,1) in 0-based indices
        let u3_entries = [(1, 1), (1, 2), (2, 1)];
        for i in 0..4 {
            let d = sys.a(i + 4) - sys.a(i);
            for r in 0..4 {
                for c in 0..4 {
                    if !u3_entries.contains(&(r, c)) {
                        assert_eq!(d[(r, c)], 0.0, "mode {} entry ({r},{c})", i + 1);
                    }
                }
            }
        }
    }

    #[test]
    fn motor_quarter_combination_has_null_fourth_column() {
        let sys = build_dc_motor(&MotorParams::default(), MotorMode::Position).unwrap();
        let lam = SimplexVector::new(vec![0.25, 0.25, 0.25, 0.25, 0., 0., 0., 0.]).unwrap();
        let (a, _) = convex_combination(&sys, &lam).unwrap();
        assert!(a.column(3).iter().all(|v| *v == 0.0));
        assert_eq!(a[(0, 1)], -0.5 / 1e-3);
    }

    #[test]
    fn integrator_block_placement() {
        let sys = example1();
        let aug =
            augment_with_integrator(&sys, &DMatrix::identity(2, 2), &DVector::zeros(2)).unwrap();
        assert_eq!(aug.n(), 4);
        for i in 0..3 {
            assert_eq!(
                aug.a(i).view((2, 0), (2, 2)).into_owned(),
                DMatrix::<f64>::identity(2, 2)
            );
            assert_eq!(aug.a(i).view((0, 0), (2, 2)).into_owned(), sys.a(i).clone());
        }
    }

    #[test]
    fn integrator_dimension_mismatch() {
        let err = augment_with_integrator(&example1(), &DMatrix::zeros(1, 3), &DVector::zeros(1));
        assert!(matches!(err, Err(SystemError::DimensionMismatch(_))));
    }

    #[test]
    fn zero_integrand_gives_constant_states() {
        let aug = augment_with_integrator(&example1(), &DMatrix::zeros(1, 2), &DVector::zeros(1))
            .unwrap();
        for i in 0..3 {
            assert!(aug.a(i).row(2).iter().all(|v| *v == 0.0));
            assert_eq!(aug.b(i)[2], 0.0);
        }
    }

    #[test]
    fn velocity_operating_point_on_modes_7_8() {
        let p = MotorParams::default();
        let lam = motor_velocity_operating_point(&p, 200.0).unwrap();
        assert_eq!(&lam.weights()[..6], &[0.0; 6]);
        // 5a^2 - 12a + 2 = 0
        let a = lam.weights()[7];
        assert!((5.0 * a * a - 12.0 * a + 2.0).abs() < 1e-12);
    }

    #[test]
    fn disturbance_lookup() {
        let d = DisturbanceProfile::new(vec![0., 0., 1., 0.], vec![1.0], vec![0.0, 0.01]).unwrap();
        assert_eq!(evaluate_disturbance(&d, 0.5), 0.0);
        assert_eq!(evaluate_disturbance(&d, 1.0), 0.01);
        assert_eq!(evaluate_disturbance(&d, 2.0), 0.01);
    }

    #[test]
    fn disturbance_validation() {
        assert!(DisturbanceProfile::new(vec![1.0], vec![1.0, 0.5], vec![0.0, 1.0, 2.0]).is_err());
        assert!(DisturbanceProfile::new(vec![1.0], vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn document_json_shape() {
        let json = serde_json::to_value(example1().to_document()).unwrap();
        assert_eq!(json["n"], 2);
        assert_eq!(json["N"], 3);
        assert_eq!(json["A"][2][1][1], -1.0);
        let back: SystemDocument = serde_json::from_value(json).unwrap();
        assert_eq!(SwitchedAffineSystem::try_from(back).unwrap(), example1());
    }
}
