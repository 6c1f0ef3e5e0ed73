//! Lyapunov-certificate synthesis and the argmin switching law.
//!
//! Coordinates: `ζ = [V̄ V⊥]'ξ = [ξ̄; ξ⊥]` with `ξ = x − x_e`. The quadratic
//! `v(ξ) = ζ'Pζ` uses `P = [[P̄, P×], [P×', P⊥]]` where the off-diagonal block
//! is tied to `P⊥` through `P× = −K'P⊥`, `K = V⊥'A_λV̄(V̄'A_λV̄)⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::conic::{
    self, ConicBackend, ConicError, ConicProblem, ConicStatus, LinearMatrixExpression, Objective,
    SolverOptions,
};
use crate::equilibria::{
    self, EquilibriumError, EquilibriumSpec, EquilibriumTarget, InteriorCertificate,
    NullspaceDecomposition,
};
use crate::linalg;
use crate::sysmodel::{convex_combination, SimplexVector, SwitchedAffineSystem, SystemError};

/// Margin imposed on strict matrix inequalities.
pub const EQ_MARGIN: f64 = 1e-6;
/// Largest accepted `‖ℓ_λ‖_max`, relative to `1 + ‖b_λ‖`.
pub const ELL_LAMBDA_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("AssumptionViolated: zero is a defective eigenvalue of A_λ")]
    AssumptionViolated,
    #[error("NotSingular: A_λ is numerically full rank")]
    NotSingular,
    #[error("NoEquilibrium: residual {residual:.3e} exceeds {tolerance:.3e}")]
    NoEquilibrium { residual: f64, tolerance: f64 },
    #[error("InteriorConditionFailed: margin {margin:.3e}, rank(ML) = {rank} (m = {m})")]
    InteriorConditionFailed { margin: f64, rank: usize, m: usize },
    #[error("ParticularNullspaceUnsupported: shared modes {shared:?} do not surround the origin")]
    ParticularNullspaceUnsupported { shared: Vec<usize> },
    #[error("LmiInfeasible: solver status {status:?}, margin {margin:.3e}")]
    LmiInfeasible { status: ConicStatus, margin: f64 },
    #[error("SolverFailure: {0}")]
    Solver(String),
    #[error("CertificateRejected: {0}")]
    CertificateRejected(String),
    #[error("Dimension: {0}")]
    Dimension(String),
}

impl DesignError {
    /// Name of the failed hypothesis, `None` for numerical/solver failures.
    pub fn hypothesis(&self) -> Option<&'static str> {
        match self {
            DesignError::AssumptionViolated => Some("AssumptionViolated"),
            DesignError::NotSingular => Some("NotSingular"),
            DesignError::NoEquilibrium { .. } => Some("NoEquilibrium"),
            DesignError::InteriorConditionFailed { .. } => Some("InteriorConditionFailed"),
            DesignError::ParticularNullspaceUnsupported { .. } => {
                Some("ParticularNullspaceUnsupported")
            }
            DesignError::LmiInfeasible { .. } => Some("LmiInfeasible"),
            DesignError::CertificateRejected(_) => Some("CertificateRejected"),
            DesignError::System(_) | DesignError::Dimension(_) => Some("InvalidInput"),
            DesignError::Solver(_) => None,
        }
    }
}

impl From<EquilibriumError> for DesignError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::System(s) => DesignError::System(s),
            EquilibriumError::NotSingular => DesignError::NotSingular,
            EquilibriumError::AssumptionViolated | EquilibriumError::SingularProjection => {
                DesignError::AssumptionViolated
            }
            EquilibriumError::NoEquilibrium {
                residual,
                tolerance,
            } => DesignError::NoEquilibrium {
                residual,
                tolerance,
            },
            EquilibriumError::Dimension(s) => DesignError::Dimension(s),
        }
    }
}

impl From<ConicError> for DesignError {
    fn from(e: ConicError) -> Self {
        DesignError::Solver(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignObjective {
    /// Maximize a common eigenvalue margin under `P ⪯ I`.
    MaxMargin,
    /// Minimize the condition number of `P` subject to `P ⪰ floor·I`.
    MinCondition { floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub objective: DesignObjective,
    /// Minimum eigenvalue margin accepted for the strict inequalities.
    pub margin: f64,
    pub rank_tol: f64,
    pub solver: SolverOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            objective: DesignObjective::MaxMargin,
            margin: EQ_MARGIN,
            rank_tol: equilibria::DEFAULT_RANK_TOL,
            solver: SolverOptions::default(),
        }
    }
}

/// `P̄`, `P⊥` and everything derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCertificate {
    pub p_bar: DMatrix<f64>,
    pub p_perp: DMatrix<f64>,
    pub p_cross: DMatrix<f64>,
    /// Block matrix in `ζ` coordinates.
    pub p: DMatrix<f64>,
    pub decomp: NullspaceDecomposition,
    pub lambda: SimplexVector,
    pub equilibrium: EquilibriumSpec,
    /// `K = V⊥'A_λV̄(V̄'A_λV̄)⁻¹`.
    pub gain: DMatrix<f64>,
    pub a_lambda: DMatrix<f64>,
}

impl LyapunovCertificate {
    /// `P` in state coordinates: `v = ξ' P_x ξ`.
    pub fn p_state(&self) -> DMatrix<f64> {
        let t = self.decomp.basis();
        &t * &self.p * t.transpose()
    }

    /// `He(S̄A_λV̄)`.
    pub fn decrease_block(&self) -> DMatrix<f64> {
        let s_bar = &self.p_bar * self.decomp.v_bar.transpose()
            + &self.p_cross * self.decomp.v_perp.transpose();
        linalg::he(&(s_bar * &self.a_lambda * &self.decomp.v_bar))
    }
}

fn assemble_p(p_bar: &DMatrix<f64>, p_cross: &DMatrix<f64>, p_perp: &DMatrix<f64>) -> DMatrix<f64> {
    let top = linalg::hstack(&[p_bar, p_cross]);
    let bottom = linalg::hstack(&[&p_cross.transpose(), p_perp]);
    linalg::vstack(&[&top, &bottom])
}

/// Per-mode data of `f_i(ξ)`.
#[derive(Debug, Clone, PartialEq)]
struct ModeTerms {
    he_bar: DMatrix<f64>,
    u: DMatrix<f64>,
    he_perp: DMatrix<f64>,
    s_bar_ell: DVector<f64>,
    s_perp_ell: DVector<f64>,
}

/// The state-feedback law `σ(x) = argmin_i f_i(x − x_e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingLaw {
    pub system: SwitchedAffineSystem,
    pub certificate: LyapunovCertificate,
    pub ell: Vec<DVector<f64>>,
    pub s_bar: DMatrix<f64>,
    pub s_perp: DMatrix<f64>,
    pub u: Vec<DMatrix<f64>>,
    pub interior: InteriorCertificate,
    pub shared: Vec<usize>,
    terms: Vec<ModeTerms>,
}

impl SwitchingLaw {
    /// Build the law for a given `(P̄, P⊥)` without checking the inequalities.
    pub fn from_blocks(
        sys: &SwitchedAffineSystem,
        lambda: &SimplexVector,
        target: &EquilibriumTarget,
        p_bar: DMatrix<f64>,
        p_perp: DMatrix<f64>,
    ) -> Result<Self, DesignError> {
        let pre = Prepared::new(sys, lambda, target, equilibria::DEFAULT_RANK_TOL)?;
        pre.law(p_bar, p_perp)
    }

    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn x_e(&self) -> DVector<f64> {
        self.certificate.equilibrium.x_e_vec()
    }

    /// `ζ = [V̄ V⊥]'(x − x_e)`.
    pub fn zeta(&self, x: &DVector<f64>) -> DVector<f64> {
        self.certificate.decomp.basis().transpose() * (x - self.x_e())
    }

    pub fn lyapunov_value(&self, x: &DVector<f64>) -> f64 {
        let z = self.zeta(x);
        (z.transpose() * &self.certificate.p * &z)[(0, 0)]
    }

    /// `f_i(ξ)` for every mode at state `x`.
    pub fn f_values(&self, x: &DVector<f64>) -> Vec<f64> {
        let xi = x - self.x_e();
        self.f_values_xi(&xi)
    }

    /// `f_i` at a deviation `ξ`.
    pub fn f_values_xi(&self, xi: &DVector<f64>) -> Vec<f64> {
        let d = &self.certificate.decomp;
        let xb = d.v_bar.transpose() * xi;
        let xp = d.v_perp.transpose() * xi;
        self.terms
            .iter()
            .map(|t| {
                xb.dot(&(&t.he_bar * &xb))
                    + 2.0 * xb.dot(&(&t.u * &xp))
                    + xp.dot(&(&t.he_perp * &xp))
                    + 2.0 * xb.dot(&t.s_bar_ell)
                    + 2.0 * xp.dot(&t.s_perp_ell)
            })
            .collect()
    }

    /// Argmin of `f`, keeping `prev_mode` on ties.
    pub fn select_mode(&self, x: &DVector<f64>, prev_mode: Option<usize>) -> usize {
        select_from_values(&self.f_values(x), prev_mode)
    }

    /// Same law with a new `x_e⊥`; `x̄_e` is kept and `ℓ_i` recomputed.
    pub fn with_reference(&self, x_perp: &DVector<f64>) -> Result<Self, DesignError> {
        let d = &self.certificate.decomp;
        if x_perp.len() != d.m {
            return Err(DesignError::Dimension(format!(
                "x_e⊥ has length {}, expected {}",
                x_perp.len(),
                d.m
            )));
        }
        let x_bar = DVector::from_vec(self.certificate.equilibrium.x_bar.clone());
        let x_e = &d.v_bar * &x_bar + &d.v_perp * x_perp;
        let mut out = self.clone();
        out.certificate.equilibrium.x_e = x_e.iter().copied().collect();
        out.certificate.equilibrium.x_perp = x_perp.iter().copied().collect();
        out.ell = equilibria::residual_terms(&self.system, &x_e);
        out.terms = mode_terms(&self.system, d, &out.s_bar, &out.s_perp, &out.u, &out.ell);
        Ok(out)
    }
}

/// Index of the smallest value within `1e-12(1 + max|f|)`; `prev` wins ties.
pub fn select_from_values(f: &[f64], prev: Option<usize>) -> usize {
    let min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * (1.0 + scale);
    if let Some(p) = prev {
        if p < f.len() && f[p] <= min + tol {
            return p;
        }
    }
    f.iter().position(|&v| v <= min + tol).unwrap_or(0)
}

fn mode_terms(
    sys: &SwitchedAffineSystem,
    d: &NullspaceDecomposition,
    s_bar: &DMatrix<f64>,
    s_perp: &DMatrix<f64>,
    u: &[DMatrix<f64>],
    ell: &[DVector<f64>],
) -> Vec<ModeTerms> {
    (0..sys.modes())
        .map(|i| {
            let a = sys.a(i);
            ModeTerms {
                he_bar: linalg::he(&(s_bar * a * &d.v_bar)),
                u: u[i].clone(),
                he_perp: linalg::he(&(s_perp * a * &d.v_perp)),
                s_bar_ell: s_bar * &ell[i],
                s_perp_ell: s_perp * &ell[i],
            }
        })
        .collect()
}

/// Everything that does not depend on `(P̄, P⊥)`.
struct Prepared {
    sys: SwitchedAffineSystem,
    lambda: SimplexVector,
    spec: EquilibriumSpec,
    decomp: NullspaceDecomposition,
    a_lambda: DMatrix<f64>,
    gain: DMatrix<f64>,
    ell: Vec<DVector<f64>>,
    interior: InteriorCertificate,
    shared: Vec<usize>,
}

impl Prepared {
    fn new(
        sys: &SwitchedAffineSystem,
        lambda: &SimplexVector,
        target: &EquilibriumTarget,
        rank_tol: f64,
    ) -> Result<Self, DesignError> {
        let (spec, decomp) = equilibria::solve_equilibrium_with_tol(sys, lambda, target, rank_tol)?;
        let (a_lambda, b_lambda) = convex_combination(sys, lambda)?;
        let ell = equilibria::residual_terms(sys, &spec.x_e_vec());
        let ell_lambda = lambda.combine_vectors(&ell);
        let ell_tol = ELL_LAMBDA_TOL * (1.0 + b_lambda.norm());
        if linalg::max_abs_vec(&ell_lambda) > ell_tol {
            return Err(DesignError::NoEquilibrium {
                residual: linalg::max_abs_vec(&ell_lambda),
                tolerance: ell_tol,
            });
        }
        let gain = equilibria::projection_gain(&a_lambda, &decomp)?;
        let m_mat = equilibria::compute_m(&a_lambda, &decomp)?;
        let shared = equilibria::detect_shared_subset(sys, &decomp);
        let all: Vec<usize> = (0..sys.modes()).collect();
        let interior = if shared.len() == sys.modes() {
            let cert = equilibria::check_interior_condition(&m_mat, &ell, &all);
            if !cert.valid {
                return Err(DesignError::InteriorConditionFailed {
                    margin: cert.margin,
                    rank: cert.rank_ml,
                    m: cert.m,
                });
            }
            cert
        } else {
            let cert = equilibria::check_interior_condition(&m_mat, &ell, &shared);
            if !cert.valid {
                return Err(DesignError::ParticularNullspaceUnsupported { shared });
            }
            cert
        };
        Ok(Self {
            sys: sys.clone(),
            lambda: lambda.clone(),
            spec,
            decomp,
            a_lambda,
            gain,
            ell,
            interior,
            shared,
        })
    }

    fn blocks(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let b = self.decomp.v_bar.transpose() * &self.a_lambda * &self.decomp.v_bar;
        let d = self.decomp.v_perp.transpose() * &self.a_lambda * &self.decomp.v_bar;
        (b, d)
    }

    fn law(&self, p_bar: DMatrix<f64>, p_perp: DMatrix<f64>) -> Result<SwitchingLaw, DesignError> {
        let d = &self.decomp;
        if p_bar.nrows() != d.p()
            || p_bar.ncols() != d.p()
            || p_perp.nrows() != d.m
            || p_perp.ncols() != d.m
        {
            return Err(DesignError::Dimension(format!(
                "expected P̄ {0}x{0} and P⊥ {1}x{1}",
                d.p(),
                d.m
            )));
        }
        let p_cross = -self.gain.transpose() * &p_perp;
        let p = assemble_p(&p_bar, &p_cross, &p_perp);
        let s_bar = &p_bar * d.v_bar.transpose() + &p_cross * d.v_perp.transpose();
        let s_perp = &p_perp * d.v_perp.transpose() + p_cross.transpose() * d.v_bar.transpose();
        let u: Vec<DMatrix<f64>> = (0..self.sys.modes())
            .map(|i| {
                let a = self.sys.a(i);
                d.v_bar.transpose() * a.transpose() * s_perp.transpose() + &s_bar * a * &d.v_perp
            })
            .collect();
        let terms = mode_terms(&self.sys, d, &s_bar, &s_perp, &u, &self.ell);
        Ok(SwitchingLaw {
            system: self.sys.clone(),
            certificate: LyapunovCertificate {
                p_bar,
                p_perp,
                p_cross,
                p,
                decomp: self.decomp.clone(),
                lambda: self.lambda.clone(),
                equilibrium: self.spec.clone(),
                gain: self.gain.clone(),
                a_lambda: self.a_lambda.clone(),
            },
            ell: self.ell.clone(),
            s_bar,
            s_perp,
            u,
            interior: self.interior.clone(),
            shared: self.shared.clone(),
            terms,
        })
    }
}

/// Symmetric basis `E_kk` and `E_kl + E_lk` of the upper triangle.
fn sym_basis(k: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::new();
    for i in 0..k {
        for j in i..k {
            let mut e = DMatrix::zeros(k, k);
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            out.push(e);
        }
    }
    out
}

fn unpack_sym(k: usize, vals: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            m[(i, j)] = vals[idx];
            m[(j, i)] = vals[idx];
            idx += 1;
        }
    }
    m
}

/// Coefficient matrices of `P` (ζ coordinates) and of `He(P̄B + P×D)`
/// for every decision variable, P̄ entries first.
fn lmi_templates(
    p: usize,
    m: usize,
    b: &DMatrix<f64>,
    d: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let n = p + m;
    let mut p_terms = Vec::new();
    let mut dec_terms = Vec::new();
    for e in sym_basis(p) {
        let mut pe = DMatrix::zeros(n, n);
        pe.view_mut((0, 0), (p, p)).copy_from(&e);
        p_terms.push(pe);
        dec_terms.push(linalg::he(&(&e * b)));
    }
    for e in sym_basis(m) {
        let cross = -k.transpose() * &e;
        let mut pe = DMatrix::zeros(n, n);
        pe.view_mut((0, p), (p, m)).copy_from(&cross);
        pe.view_mut((p, 0), (m, p)).copy_from(&cross.transpose());
        pe.view_mut((p, p), (m, m)).copy_from(&e);
        p_terms.push(pe);
        dec_terms.push(linalg::he(&(&cross * d)));
    }
    (p_terms, dec_terms)
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    linalg::sym(&m)
}

/// Full pipeline: equilibrium, hypotheses, matrix inequalities, law.
pub fn design_switching(
    sys: &SwitchedAffineSystem,
    lambda: &SimplexVector,
    target: &EquilibriumTarget,
    opts: &DesignOptions,
) -> Result<SwitchingLaw, DesignError> {
    let pre = Prepared::new(sys, lambda, target, opts.rank_tol)?;
    let (p_bar, p_perp) = solve_blocks(&pre, opts)?;
    let law = pre.law(p_bar, p_perp)?;
    let report = verify_certificate(&law);
    if !report.valid {
        let failed: Vec<&str> = report
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name.as_str())
            .collect();
        return Err(DesignError::CertificateRejected(failed.join(", ")));
    }
    Ok(law)
}

fn solve_blocks(
    pre: &Prepared,
    opts: &DesignOptions,
) -> Result<(DMatrix<f64>, DMatrix<f64>), DesignError> {
    let d = &pre.decomp;
    let (p, m) = (d.p(), d.m);
    let n = p + m;
    let (b, dm) = pre.blocks();
    let np = p * (p + 1) / 2;
    let nm = m * (m + 1) / 2;
    let nv = np + nm;
    let backend = conic::BarrierSolver;
    match opts.objective {
        DesignObjective::MaxMargin => {
            let scale = linalg::singular_values(&pre.a_lambda)
                .first()
                .copied()
                .unwrap_or(1.0)
                .max(1e-300);
            let (p_terms, dec_terms) =
                lmi_templates(p, m, &(&b / scale), &(&dm / scale), &pre.gain);
            let t = nv;
            let mut lmis = Vec::new();
            if p > 0 {
                let mut dec = LinearMatrixExpression::leq(DMatrix::zeros(p, p));
                for (v, f) in dec_terms.iter().enumerate() {
                    dec.add_term(v, symmetrize(f.clone()));
                }
                dec.add_term(t, DMatrix::identity(p, p));
                lmis.push(dec);
            }
            let mut pos = LinearMatrixExpression::geq(DMatrix::zeros(n, n));
            for (v, f) in p_terms.iter().enumerate() {
                pos.add_term(v, f.clone());
            }
            pos.add_term(t, -DMatrix::identity(n, n));
            lmis.push(pos);
            let mut norm = LinearMatrixExpression::leq(-DMatrix::identity(n, n));
            for (v, f) in p_terms.iter().enumerate() {
                norm.add_term(v, f.clone());
            }
            lmis.push(norm);
            let mut c = vec![0.0; nv + 1];
            c[t] = 1.0;
            let problem = ConicProblem {
                num_vars: nv + 1,
                lmis,
                linear: vec![],
                objective: Objective::Maximize(c),
            };
            let sol = backend.solve(&problem, &opts.solver)?;
            match sol.status {
                ConicStatus::Optimal if sol.values[t] >= opts.margin => {}
                ConicStatus::Optimal
                | ConicStatus::Infeasible
                | ConicStatus::MarginBelowThreshold => {
                    return Err(DesignError::LmiInfeasible {
                        status: sol.status,
                        margin: sol.values[t],
                    })
                }
                other => {
                    return Err(DesignError::Solver(format!(
                        "conic solve ended with {other:?}"
                    )))
                }
            }
            Ok((
                unpack_sym(p, &sol.values[..np]),
                unpack_sym(m, &sol.values[np..nv]),
            ))
        }
        DesignObjective::MinCondition { floor } => {
            let (p_terms, dec_terms) = lmi_templates(p, m, &b, &dm, &pre.gain);
            let mut lmis = Vec::new();
            if p > 0 {
                let mut dec =
                    LinearMatrixExpression::leq(DMatrix::zeros(p, p)).with_margin(opts.margin);
                for (v, f) in dec_terms.iter().enumerate() {
                    dec.add_term(v, symmetrize(f.clone()));
                }
                lmis.push(dec);
            }
            let mut p_expr = LinearMatrixExpression::geq(DMatrix::zeros(n, n));
            for (v, f) in p_terms.iter().enumerate() {
                p_expr.add_term(v, f.clone());
            }
            let base = ConicProblem {
                num_vars: nv,
                lmis,
                linear: vec![],
                objective: Objective::Maximize(vec![0.0; nv]),
            };
            let sol = conic::min_condition_number(&p_expr, &base, floor, &opts.solver)?;
            match sol.status {
                ConicStatus::Optimal => {}
                ConicStatus::Infeasible | ConicStatus::MarginBelowThreshold => {
                    return Err(DesignError::LmiInfeasible {
                        status: sol.status,
                        margin: sol.achieved_margin,
                    })
                }
                other => {
                    return Err(DesignError::Solver(format!(
                        "conic solve ended with {other:?}"
                    )))
                }
            }
            Ok((
                unpack_sym(p, &sol.values[..np]),
                unpack_sym(m, &sol.values[np..nv]),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    /// Eigenvalues of `He(S̄A_λV̄)`, ascending.
    pub decrease_eigenvalues: Vec<f64>,
    /// Eigenvalues of `P`, ascending.
    pub p_eigenvalues: Vec<f64>,
    pub p_cross_residual: f64,
    pub u_lambda_residual: f64,
    pub ell_lambda_residual: f64,
    pub interior: InteriorCertificate,
    pub checks: Vec<HypothesisCheck>,
    pub valid: bool,
}

/// Re-check every hypothesis of the synthesis result numerically.
pub fn verify_certificate(law: &SwitchingLaw) -> CertificateReport {
    let cert = &law.certificate;
    let d = &cert.decomp;
    let decrease = linalg::sym_eigenvalues(&cert.decrease_block());
    let p_eigs = linalg::sym_eigenvalues(&cert.p);
    let expected_cross_t = -&cert.p_perp * &cert.gain;
    let p_cross_residual = linalg::max_abs(&(cert.p_cross.transpose() - expected_cross_t));
    let u_lambda = cert.lambda.combine_matrices(&law.u);
    let u_scale = law.u.iter().map(linalg::max_abs).fold(0.0, f64::max);
    let u_lambda_residual = linalg::max_abs(&u_lambda);
    let ell_lambda = cert.lambda.combine_vectors(&law.ell);
    let b_lambda = cert.lambda.combine_vectors(law.system.b_all());
    let ell_lambda_residual = linalg::max_abs_vec(&ell_lambda);
    let p_scale = linalg::max_abs(&cert.p).max(1e-300);

    let decrease_max = decrease.last().copied().unwrap_or(f64::NEG_INFINITY);
    let p_min = p_eigs.first().copied().unwrap_or(f64::INFINITY);
    let checks = vec![
        HypothesisCheck {
            name: "decrease_lmi".into(),
            passed: d.p() == 0 || decrease_max < 0.0,
            value: decrease_max,
        },
        HypothesisCheck {
            name: "positivity_lmi".into(),
            passed: p_min > 0.0,
            value: p_min,
        },
        HypothesisCheck {
            name: "p_cross_identity".into(),
            passed: p_cross_residual <= 1e-9 * (1.0 + p_scale),
            value: p_cross_residual,
        },
        HypothesisCheck {
            name: "u_lambda_zero".into(),
            passed: u_lambda_residual <= 1e-8 * (1.0 + u_scale),
            value: u_lambda_residual,
        },
        HypothesisCheck {
            name: "ell_lambda_zero".into(),
            passed: ell_lambda_residual <= ELL_LAMBDA_TOL * (1.0 + b_lambda.norm()),
            value: ell_lambda_residual,
        },
        HypothesisCheck {
            name: "interior_condition".into(),
            passed: law.interior.valid,
            value: law.interior.margin,
        },
    ];
    let valid = checks.iter().all(|c| c.passed);
    CertificateReport {
        decrease_eigenvalues: decrease,
        p_eigenvalues: p_eigs,
        p_cross_residual,
        u_lambda_residual,
        ell_lambda_residual,
        interior: law.interior.clone(),
        checks,
        valid,
    }
}

/// JSON view of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateDocument {
    pub lambda: Vec<f64>,
    pub x_e: Vec<f64>,
    pub v_bar: Vec<Vec<f64>>,
    pub v_perp: Vec<Vec<f64>>,
    pub p_bar: Vec<Vec<f64>>,
    pub p_perp: Vec<Vec<f64>>,
    pub p_cross: Vec<Vec<f64>>,
    pub shared_modes: Vec<usize>,
    pub report: CertificateReport,
}

impl CertificateDocument {
    pub fn new(law: &SwitchingLaw) -> Self {
        let c = &law.certificate;
        Self {
            lambda: c.lambda.weights().to_vec(),
            x_e: c.equilibrium.x_e.clone(),
            v_bar: linalg::to_rows(&c.decomp.v_bar),
            v_perp: linalg::to_rows(&c.decomp.v_perp),
            p_bar: linalg::to_rows(&c.p_bar),
            p_perp: linalg::to_rows(&c.p_perp),
            p_cross: linalg::to_rows(&c.p_cross),
            shared_modes: law.shared.clone(),
            report: verify_certificate(law),
        }
    }
}
