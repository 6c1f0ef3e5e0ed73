//! Singular equilibria of `A_λ x + b_λ = 0`: nullspace split, the
//! zero-defectiveness test, equilibrium solving and the interior condition
//! on the projected affine terms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::conic::{self, ConicProblem, ConicStatus, LinearConstraint, Objective};
use crate::linalg;
use crate::sysmodel::{convex_combination, SimplexVector, SwitchedAffineSystem, SystemError};

/// Relative singular-value threshold per unit of dimension: singular values
/// `≤ n · DEFAULT_RANK_TOL · s_max` are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;
/// Smallest accepted `min μ_i` for the interior condition.
pub const INTERIOR_MARGIN: f64 = 1e-7;
const BASIS_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("not a singular combination: A_λ is numerically full rank")]
    NotSingular,
    #[error("assumption violated: zero is a defective eigenvalue of A_λ")]
    AssumptionViolated,
    #[error("λ admits no equilibrium (residual {residual:.3e} > {tolerance:.3e})")]
    NoEquilibrium { residual: f64, tolerance: f64 },
    #[error("V̄'A_λV̄ is singular")]
    SingularProjection,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Orthonormal bases of `ker A_λ` (`v_perp`, n×m) and its orthogonal
/// complement (`v_bar`, n×p).
#[derive(Debug, Clone, PartialEq)]
pub struct NullspaceDecomposition {
    pub v_perp: DMatrix<f64>,
    pub v_bar: DMatrix<f64>,
    pub m: usize,
    pub rank_tol: f64,
}

impl NullspaceDecomposition {
    pub fn n(&self) -> usize {
        self.v_perp.nrows()
    }

    pub fn p(&self) -> usize {
        self.v_bar.ncols()
    }

    /// Build from user-supplied bases, checking the orthonormality identities.
    pub fn from_bases(
        v_bar: DMatrix<f64>,
        v_perp: DMatrix<f64>,
        rank_tol: f64,
    ) -> Result<Self, EquilibriumError> {
        let d = Self {
            m: v_perp.ncols(),
            v_perp,
            v_bar,
            rank_tol,
        };
        let worst = d.identity_residual();
        if d.v_bar.nrows() != d.v_perp.nrows()
            || d.m + d.p() != d.n()
            || d.m == 0
            || worst > BASIS_TOL
        {
            return Err(EquilibriumError::Dimension(format!(
                "bases are not an orthonormal split (residual {worst:.2e})"
            )));
        }
        Ok(d)
    }

    /// Largest violation of `V̄'V⊥ = 0`, `V̄'V̄ = I`, `V⊥'V⊥ = I`.
    pub fn identity_residual(&self) -> f64 {
        let cross = self.v_bar.transpose() * &self.v_perp;
        let bb = self.v_bar.transpose() * &self.v_bar - DMatrix::identity(self.p(), self.p());
        let pp = self.v_perp.transpose() * &self.v_perp - DMatrix::identity(self.m, self.m);
        linalg::max_abs(&cross)
            .max(linalg::max_abs(&bb))
            .max(linalg::max_abs(&pp))
    }

    /// `[V̄ V⊥]`.
    pub fn basis(&self) -> DMatrix<f64> {
        linalg::hstack(&[&self.v_bar, &self.v_perp])
    }

    /// Threshold below which a singular value of an n×n matrix with top
    /// singular value `top` is zero.
    pub fn threshold(&self, top: f64) -> f64 {
        self.n() as f64 * self.rank_tol * top
    }
}

/// Split `R^n` into the nullspace of `A_λ` and its complement.
///
/// Subspaces come from the SVD; the bases are then re-extracted by pivoted
/// Gram-Schmidt on the orthogonal projectors so coordinate-aligned subspaces
/// yield coordinate vectors, and every column is signed so that its
/// largest-magnitude entry is positive.
pub fn nullspace_decomposition(
    a_lambda: &DMatrix<f64>,
    rank_tol: f64,
) -> Result<NullspaceDecomposition, EquilibriumError> {
    let n = a_lambda.nrows();
    if a_lambda.ncols() != n || n == 0 {
        return Err(EquilibriumError::Dimension(format!(
            "A_λ must be square, got {}x{}",
            a_lambda.nrows(),
            a_lambda.ncols()
        )));
    }
    let svd = a_lambda.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V'");
    let sv = &svd.singular_values;
    let top = sv.iter().fold(0.0_f64, |m, v| m.max(*v));
    let thr = n as f64 * rank_tol * top;
    let null_idx: Vec<usize> = (0..n).filter(|&i| top == 0.0 || sv[i] <= thr).collect();
    let m = null_idx.len();
    if m == 0 {
        return Err(EquilibriumError::NotSingular);
    }
    let mut raw = DMatrix::<f64>::zeros(n, m);
    for (k, &i) in null_idx.iter().enumerate() {
        raw.set_column(k, &v_t.row(i).transpose());
    }
    let proj_null = &raw * raw.transpose();
    let proj_row = DMatrix::<f64>::identity(n, n) - &proj_null;
    let v_perp = linalg::basis_from_projector(&proj_null, m);
    let v_bar = linalg::basis_from_projector(&proj_row, n - m);
    Ok(NullspaceDecomposition {
        v_perp,
        v_bar,
        m,
        rank_tol,
    })
}

/// `true` when `V̄'A_λV̄` is singular, i.e. zero is a defective eigenvalue.
pub fn check_zero_defective(a_lambda: &DMatrix<f64>, decomp: &NullspaceDecomposition) -> bool {
    if decomp.p() == 0 {
        return false;
    }
    let proj = decomp.v_bar.transpose() * a_lambda * &decomp.v_bar;
    let top = linalg::singular_values(a_lambda)
        .first()
        .copied()
        .unwrap_or(0.0);
    let smallest = linalg::singular_values(&proj)
        .last()
        .copied()
        .unwrap_or(0.0);
    smallest <= decomp.threshold(top)
}

/// A singular equilibrium `x_e = V̄x̄_e + V⊥x_e⊥` for a given `λ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSpec {
    pub lambda: Vec<f64>,
    pub x_e: Vec<f64>,
    pub x_bar: Vec<f64>,
    pub x_perp: Vec<f64>,
    pub residual: f64,
}

impl EquilibriumSpec {
    pub fn x_e_vec(&self) -> DVector<f64> {
        DVector::from_vec(self.x_e.clone())
    }
}

/// How the designer names the equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub enum EquilibriumTarget {
    /// Nullspace coordinates `x_e⊥`; `x̄_e` is solved for.
    Perp(DVector<f64>),
    /// A full point, checked against `A_λ x_e + b_λ = 0`.
    Point(DVector<f64>),
}

fn equilibrium_tolerance(b_lambda: &DVector<f64>) -> f64 {
    1e-7 * (1.0 + b_lambda.norm())
}

/// Solve the overdetermined `A_λV̄x̄_e = −b_λ` in least squares and accept
/// only a vanishing residual.
pub fn solve_equilibrium(
    sys: &SwitchedAffineSystem,
    lambda: &SimplexVector,
    x_perp: &DVector<f64>,
) -> Result<(EquilibriumSpec, NullspaceDecomposition), EquilibriumError> {
    solve_equilibrium_with_tol(
        sys,
        lambda,
        &EquilibriumTarget::Perp(x_perp.clone()),
        DEFAULT_RANK_TOL,
    )
}

pub fn solve_equilibrium_with_tol(
    sys: &SwitchedAffineSystem,
    lambda: &SimplexVector,
    target: &EquilibriumTarget,
    rank_tol: f64,
) -> Result<(EquilibriumSpec, NullspaceDecomposition), EquilibriumError> {
    let (a_l, b_l) = convex_combination(sys, lambda)?;
    let decomp = nullspace_decomposition(&a_l, rank_tol)?;
    if check_zero_defective(&a_l, &decomp) {
        return Err(EquilibriumError::AssumptionViolated);
    }
    let tol = equilibrium_tolerance(&b_l);
    let spec = match target {
        EquilibriumTarget::Perp(x_perp) => {
            if x_perp.len() != decomp.m {
                return Err(EquilibriumError::Dimension(format!(
                    "x_e⊥ has length {}, nullspace dimension is {}",
                    x_perp.len(),
                    decomp.m
                )));
            }
            let av = &a_l * &decomp.v_bar;
            let x_bar = linalg::lstsq(&av, &(-&b_l));
            let residual = linalg::max_abs_vec(&(&av * &x_bar + &b_l));
            if residual > tol {
                return Err(EquilibriumError::NoEquilibrium {
                    residual,
                    tolerance: tol,
                });
            }
            let x_e = &decomp.v_bar * &x_bar + &decomp.v_perp * x_perp;
            EquilibriumSpec {
                lambda: lambda.weights().to_vec(),
                x_e: x_e.iter().copied().collect(),
                x_bar: x_bar.iter().copied().collect(),
                x_perp: x_perp.iter().copied().collect(),
                residual,
            }
        }
        EquilibriumTarget::Point(x_e) => {
            if x_e.len() != sys.n() {
                return Err(EquilibriumError::Dimension(format!(
                    "x_e has length {}, expected {}",
                    x_e.len(),
                    sys.n()
                )));
            }
            let residual = linalg::max_abs_vec(&(&a_l * x_e + &b_l));
            if residual > tol {
                return Err(EquilibriumError::NoEquilibrium {
                    residual,
                    tolerance: tol,
                });
            }
            let x_bar = decomp.v_bar.transpose() * x_e;
            let x_perp = decomp.v_perp.transpose() * x_e;
            EquilibriumSpec {
                lambda: lambda.weights().to_vec(),
                x_e: x_e.iter().copied().collect(),
                x_bar: x_bar.iter().copied().collect(),
                x_perp: x_perp.iter().copied().collect(),
                residual,
            }
        }
    };
    Ok((spec, decomp))
}

/// `M = V⊥' − V⊥'A_λV̄(V̄'A_λV̄)⁻¹V̄'` (m×n).
pub fn compute_m(
    a_lambda: &DMatrix<f64>,
    decomp: &NullspaceDecomposition,
) -> Result<DMatrix<f64>, EquilibriumError> {
    let vp_t = decomp.v_perp.transpose();
    if decomp.p() == 0 {
        return Ok(vp_t);
    }
    let k = projection_gain(a_lambda, decomp)?;
    Ok(&vp_t - k * decomp.v_bar.transpose())
}

/// `K = V⊥'A_λV̄(V̄'A_λV̄)⁻¹` (m×p).
pub fn projection_gain(
    a_lambda: &DMatrix<f64>,
    decomp: &NullspaceDecomposition,
) -> Result<DMatrix<f64>, EquilibriumError> {
    if decomp.p() == 0 {
        return Ok(DMatrix::zeros(decomp.m, 0));
    }
    let b = decomp.v_bar.transpose() * a_lambda * &decomp.v_bar;
    let d = decomp.v_perp.transpose() * a_lambda * &decomp.v_bar;
    let top = linalg::singular_values(a_lambda)
        .first()
        .copied()
        .unwrap_or(0.0);
    let smallest = linalg::singular_values(&b).last().copied().unwrap_or(0.0);
    if smallest <= decomp.threshold(top) {
        return Err(EquilibriumError::SingularProjection);
    }
    let b_inv = b
        .try_inverse()
        .ok_or(EquilibriumError::SingularProjection)?;
    Ok(d * b_inv)
}

/// `ℓ_i = A_i x_e + b_i` for every mode.
pub fn residual_terms(sys: &SwitchedAffineSystem, x_e: &DVector<f64>) -> Vec<DVector<f64>> {
    (0..sys.modes()).map(|i| sys.field(i, x_e)).collect()
}

/// Modes (0-based) whose matrix annihilates the nullspace: `‖A_iV⊥‖_max ≤ tol`
/// with `tol = 1e-9 · max(1, ‖A_i‖_max)`.
pub fn detect_shared_subset(
    sys: &SwitchedAffineSystem,
    decomp: &NullspaceDecomposition,
) -> Vec<usize> {
    (0..sys.modes())
        .filter(|&i| {
            let a = sys.a(i);
            let tol = 1e-9 * linalg::max_abs(a).max(1.0);
            linalg::max_abs(&(a * &decomp.v_perp)) <= tol
        })
        .collect()
}

/// Witness for `0 ∈ Int co{Mℓ_i : i ∈ subset}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteriorCertificate {
    /// Full-length weights (zero outside `subset`).
    pub mu: Vec<f64>,
    /// `min μ_i` over the subset; the LP optimum.
    pub margin: f64,
    pub rank_ml: usize,
    pub m: usize,
    pub subset: Vec<usize>,
    pub valid: bool,
    /// `‖Σμ_i Mℓ_i‖_max` at the returned weights.
    pub residual: f64,
}

/// Rank test plus the LP `max t s.t. Σμ_iMℓ_i = 0, Σμ_i = 1, μ_i ≥ t` over
/// `subset` (0-based indices into `ell`).
pub fn check_interior_condition(
    m_mat: &DMatrix<f64>,
    ell: &[DVector<f64>],
    subset: &[usize],
) -> InteriorCertificate {
    let m = m_mat.nrows();
    let n_modes = ell.len();
    let ml: Vec<DVector<f64>> = subset.iter().map(|&i| m_mat * &ell[i]).collect();
    let invalid = |rank_ml| InteriorCertificate {
        mu: vec![0.0; n_modes],
        margin: f64::NEG_INFINITY,
        rank_ml,
        m,
        subset: subset.to_vec(),
        valid: false,
        residual: f64::INFINITY,
    };
    if subset.is_empty() {
        return invalid(0);
    }
    let ml_mat = DMatrix::from_columns(&ml);
    let rank_ml = linalg::rank(&ml_mat, DEFAULT_RANK_TOL);

    // variables: μ_1..μ_k (free, bounded below through μ_i − t ≥ 0), t
    let k = subset.len();
    let t_idx = k;
    let mut lin = Vec::new();
    let scale = ml
        .iter()
        .map(|v| linalg::max_abs_vec(v))
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    for r in 0..m {
        let coeffs = (0..k).map(|j| (j, ml[j][r] / scale)).collect();
        lin.push(LinearConstraint::eq(coeffs, 0.0));
    }
    lin.push(LinearConstraint::eq(
        (0..k).map(|j| (j, 1.0)).collect(),
        1.0,
    ));
    for j in 0..k {
        lin.push(LinearConstraint::geq(vec![(j, 1.0), (t_idx, -1.0)], 0.0));
    }
    let mut objective = vec![0.0; k + 1];
    objective[t_idx] = 1.0;
    let problem = ConicProblem {
        num_vars: k + 1,
        lmis: Vec::new(),
        linear: lin,
        objective: Objective::Maximize(objective),
    };
    let sol = match conic::solve_lp(&problem) {
        Ok(s) if s.status == ConicStatus::Optimal => s,
        _ => return invalid(rank_ml),
    };
    let mut mu = vec![0.0; n_modes];
    for (j, &i) in subset.iter().enumerate() {
        mu[i] = sol.values[j];
    }
    let t = sol.values[t_idx];
    let mut combo = DVector::zeros(m);
    for (j, v) in ml.iter().enumerate() {
        combo += v * sol.values[j];
    }
    InteriorCertificate {
        mu,
        margin: t,
        rank_ml,
        m,
        subset: subset.to_vec(),
        valid: t >= INTERIOR_MARGIN && rank_ml == m,
        residual: linalg::max_abs_vec(&combo),
    }
}

/// Result of the affine-terms-in-nullspace test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalRateDiagnostic {
    /// All `ℓ_i` lie in the nullspace; no global exponential rate can exist.
    pub triggered: bool,
    /// `max_i ‖ℓ_i‖`, the speed bound for nullspace-started trajectories.
    pub ell_bar: f64,
}

pub fn diagnose_no_global_exponential(
    ell: &[DVector<f64>],
    decomp: &NullspaceDecomposition,
) -> GlobalRateDiagnostic {
    let ell_bar = ell.iter().map(|l| l.norm()).fold(0.0_f64, f64::max);
    let tol = 1e-9 * ell_bar.max(1.0);
    let triggered = ell
        .iter()
        .all(|l| (decomp.v_bar.transpose() * l).norm() <= tol);
    GlobalRateDiagnostic { triggered, ell_bar }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn m_from(rows: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, rows.len(), rows)
    }

    #[test]
    fn example1_decomposition() {
        let a = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1. / 3.]);
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.m, 1);
        assert_eq!(d.v_perp.as_slice(), &[1.0, 0.0]);
        assert_eq!(d.v_bar.as_slice(), &[0.0, 1.0]);
        assert!(d.identity_residual() < 1e-10);
    }

    #[test]
    fn zero_matrix_has_full_nullspace() {
        let d = nullspace_decomposition(&DMatrix::zeros(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.m, 2);
        assert_eq!(d.p(), 0);
    }

    #[test]
    fn full_rank_is_rejected() {
        let err = nullspace_decomposition(&DMatrix::identity(3, 3), DEFAULT_RANK_TOL).unwrap_err();
        assert_eq!(err, EquilibriumError::NotSingular);
    }

    #[test]
    fn motor_position_nullspace() {
        let f = fixtures::motor_position();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(d.m, 1);
        assert_eq!(d.v_perp.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
        assert!((d.basis() - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn defectiveness_cases() {
        let jordan = DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.]);
        let d = nullspace_decomposition(&jordan, DEFAULT_RANK_TOL).unwrap();
        assert!(check_zero_defective(&jordan, &d));

        let diag = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1.]);
        let d = nullspace_decomposition(&diag, DEFAULT_RANK_TOL).unwrap();
        assert!(!check_zero_defective(&diag, &d));

        let ex1 = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1. / 3.]);
        let d = nullspace_decomposition(&ex1, DEFAULT_RANK_TOL).unwrap();
        let proj = d.v_bar.transpose() * &ex1 * &d.v_bar;
        assert!((proj[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        assert!(!check_zero_defective(&ex1, &d));
    }

    #[test]
    fn example1_equilibria_along_nullspace() {
        let f = fixtures::example1();
        for tau in [-3.0, 0.0, 2.5] {
            let (eq, _) =
                solve_equilibrium(&f.system, &f.lambda, &DVector::from_element(1, tau)).unwrap();
            assert!((eq.x_e[0] - tau).abs() < 1e-12);
            assert!(eq.x_e[1].abs() < 1e-12);
        }
    }

    #[test]
    fn motor_position_equilibrium() {
        let f = fixtures::motor_position();
        let theta = 1.234;
        let (eq, _) =
            solve_equilibrium(&f.system, &f.lambda, &DVector::from_element(1, theta)).unwrap();
        let expect = [0.0, 24.0, 0.0, theta];
        for (a, b) in eq.x_e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{:?}", eq.x_e);
        }
    }

    #[test]
    fn inconsistent_lambda_has_no_equilibrium() {
        let f = fixtures::example1();
        // λ = (1/2, 0, 1/2): b_λ = (-1/2, 0) is not in the range of A_λ = diag(0, -1/2)
        let lam = SimplexVector::new(vec![0.5, 0.0, 0.5]).unwrap();
        let err = solve_equilibrium(&f.system, &lam, &DVector::zeros(1)).unwrap_err();
        assert!(matches!(err, EquilibriumError::NoEquilibrium { .. }));
    }

    #[test]
    fn defective_combination_is_rejected() {
        let a1 = DMatrix::from_row_slice(2, 2, &[0., 1., 0., 0.]);
        let sys = SwitchedAffineSystem::new(
            vec![a1.clone(), a1],
            vec![DVector::zeros(2), DVector::zeros(2)],
        )
        .unwrap();
        let err =
            solve_equilibrium(&sys, &SimplexVector::uniform(2), &DVector::zeros(1)).unwrap_err();
        assert_eq!(err, EquilibriumError::AssumptionViolated);
    }

    #[test]
    fn m_for_example1_and_motor() {
        let f = fixtures::example1();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let m = compute_m(&a, &d).unwrap();
        assert_eq!(m, m_from(&[1.0, 0.0]));

        let f = fixtures::motor_position();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let m = compute_m(&a, &d).unwrap();
        assert!((m[(0, 3)] - 1.0).abs() < 1e-12);
        assert!(((&m * &d.v_perp)[(0, 0)] - 1.0).abs() < 1e-9);
        assert!(linalg::max_abs(&(&m * &a * &d.v_bar)) < 1e-9);
    }

    #[test]
    fn m_is_vperp_when_left_and_right_nullspaces_agree() {
        let a = DMatrix::from_row_slice(3, 3, &[-2., 1., 0., 1., -3., 0., 0., 0., 0.]);
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let m = compute_m(&a, &d).unwrap();
        assert!(linalg::max_abs(&(m - d.v_perp.transpose())) < 1e-14);
    }

    #[test]
    fn residuals_at_origin_are_affine_terms() {
        let f = fixtures::example1();
        let ell = residual_terms(&f.system, &DVector::zeros(2));
        assert_eq!(ell[0].as_slice(), &[-1.0, 0.0]);
        assert_eq!(ell[1].as_slice(), &[1.0, 0.0]);
        assert_eq!(ell[2].as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn motor_projected_residuals_ignore_angle() {
        let f = fixtures::motor_position();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let m = compute_m(&a, &d).unwrap();
        let ell0 = residual_terms(&f.system, &DVector::from_vec(vec![0., 24., 0., 0.]));
        let ell1 = residual_terms(&f.system, &DVector::from_vec(vec![0., 24., 0., 7.0]));
        for (x, y) in ell0.iter().zip(&ell1) {
            assert!(((&m * x) - (&m * y)).norm() < 1e-12);
        }
    }

    #[test]
    fn shared_subsets() {
        for f in [
            fixtures::example1(),
            fixtures::motor_position(),
            fixtures::motor_velocity(),
        ] {
            let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
            let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
            assert_eq!(
                detect_shared_subset(&f.system, &d),
                (0..f.system.modes()).collect::<Vec<_>>()
            );
        }
        let a1 = DMatrix::from_row_slice(2, 2, &[1., 0., 0., -1.]);
        let a2 = DMatrix::from_row_slice(2, 2, &[-1., 0., 0., -1.]);
        let sys =
            SwitchedAffineSystem::new(vec![a1, a2], vec![DVector::zeros(2), DVector::zeros(2)])
                .unwrap();
        let (a, _) = convex_combination(&sys, &SimplexVector::uniform(2)).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(detect_shared_subset(&sys, &d), Vec::<usize>::new());
    }

    #[test]
    fn interior_condition_cases() {
        let m = DMatrix::identity(1, 1);
        let ell: Vec<_> = [-1.0, 1.0, 0.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        let cert = check_interior_condition(&m, &ell, &[0, 1, 2]);
        assert!(cert.valid);
        for mu in &cert.mu {
            assert!((mu - 1.0 / 3.0).abs() < 1e-9);
        }

        let ell: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .map(|v| DVector::from_element(1, *v))
            .collect();
        let cert = check_interior_condition(&m, &ell, &[0, 1, 2]);
        assert!(!cert.valid);
    }

    #[test]
    fn interior_condition_rank_deficient_in_two_dims() {
        // all points on a line through the origin: 0 in relative interior only
        let m = DMatrix::identity(2, 2);
        let ell = vec![
            DVector::from_vec(vec![1.0, 0.0]),
            DVector::from_vec(vec![-1.0, 0.0]),
        ];
        let cert = check_interior_condition(&m, &ell, &[0, 1]);
        assert!(cert.margin > 0.4);
        assert_eq!(cert.rank_ml, 1);
        assert!(!cert.valid);
    }

    #[test]
    fn global_rate_diagnostic() {
        let f = fixtures::example1();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let ell = residual_terms(&f.system, &DVector::zeros(2));
        let diag = diagnose_no_global_exponential(&ell, &d);
        assert!(diag.triggered);
        assert_eq!(diag.ell_bar, 1.0);

        let zero = vec![DVector::zeros(2); 3];
        let diag = diagnose_no_global_exponential(&zero, &d);
        assert!(diag.triggered);
        assert_eq!(diag.ell_bar, 0.0);

        let f = fixtures::motor_position();
        let (a, _) = convex_combination(&f.system, &f.lambda).unwrap();
        let d = nullspace_decomposition(&a, DEFAULT_RANK_TOL).unwrap();
        let ell = residual_terms(&f.system, &DVector::from_vec(vec![0., 24., 0., 0.]));
        assert!(!diagnose_no_global_exponential(&ell, &d).triggered);
    }
}
