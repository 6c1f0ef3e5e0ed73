//! Small dense semidefinite and linear programs.
//!
//! Problems are stated over free real variables with affine matrix
//! inequalities, scalar (in)equalities and a linear objective. The default
//! backend is a log-barrier Newton method; linear programs without matrix
//! constraints can also go through a two-phase simplex.

mod barrier;
mod simplex;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg;

pub use barrier::BarrierSolver;
pub use simplex::solve_lp;

/// Default margin used for strict inequalities.
pub const STRICT_MARGIN: f64 = 1e-6;
/// Slack accepted by the post-solve verification.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LmiSense {
    /// `expr ⪰ margin·I`
    Geq,
    /// `expr ⪯ −margin·I`
    Leq,
}

/// `constant + Σ x_k F_k` compared against `±margin·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMatrixExpression {
    pub constant: DMatrix<f64>,
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub sense: LmiSense,
    pub margin: f64,
}

impl LinearMatrixExpression {
    pub fn new(constant: DMatrix<f64>, sense: LmiSense) -> Self {
        Self {
            constant,
            terms: Vec::new(),
            sense,
            margin: 0.0,
        }
    }

    pub fn geq(constant: DMatrix<f64>) -> Self {
        Self::new(constant, LmiSense::Geq)
    }

    pub fn leq(constant: DMatrix<f64>) -> Self {
        Self::new(constant, LmiSense::Leq)
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    /// Add `coeff · x_var`; repeated variables accumulate.
    pub fn add_term(&mut self, var: usize, coeff: DMatrix<f64>) {
        if let Some((_, m)) = self.terms.iter_mut().find(|(v, _)| *v == var) {
            *m += coeff;
        } else {
            self.terms.push((var, coeff));
        }
    }

    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// The affine matrix at `x`.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, f) in &self.terms {
            out += f * x[*v];
        }
        out
    }

    /// Eigenvalue slack: `λ_min(expr) − margin` for `⪰`, `−λ_max(expr) − margin` for `⪯`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.gap(x) - self.margin
    }

    /// Distance of the spectrum from zero on the admissible side.
    pub fn gap(&self, x: &[f64]) -> f64 {
        let m = self.evaluate(x);
        match self.sense {
            LmiSense::Geq => linalg::s_min(&m),
            LmiSense::Leq => -linalg::s_max(&m),
        }
    }

    fn check(&self, num_vars: usize) -> Result<(), ConicError> {
        let d = self.dim();
        if self.constant.ncols() != d {
            return Err(ConicError::Malformed("non-square LMI constant".into()));
        }
        let asym = |m: &DMatrix<f64>| {
            linalg::max_abs(&(m - m.transpose())) > 1e-12 * linalg::max_abs(m).max(1.0)
        };
        if asym(&self.constant) {
            return Err(ConicError::Malformed(
                "LMI constant is not symmetric".into(),
            ));
        }
        for (v, f) in &self.terms {
            if *v >= num_vars {
                return Err(ConicError::Malformed(format!("variable {v} out of range")));
            }
            if f.nrows() != d || f.ncols() != d {
                return Err(ConicError::Malformed("LMI term dimension mismatch".into()));
            }
            if asym(f) {
                return Err(ConicError::Malformed(format!(
                    "LMI coefficient of x{v} is not symmetric"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Eq,
    Geq,
    Leq,
}

/// `Σ coeff·x  (= | ≥ | ≤)  rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub coeffs: Vec<(usize, f64)>,
    pub kind: ConstraintKind,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn eq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            kind: ConstraintKind::Eq,
            rhs,
        }
    }

    pub fn geq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            kind: ConstraintKind::Geq,
            rhs,
        }
    }

    pub fn leq(coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            coeffs,
            kind: ConstraintKind::Leq,
            rhs,
        }
    }

    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|(v, c)| c * x[*v]).sum()
    }

    /// Signed violation (positive means violated).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.kind {
            ConstraintKind::Eq => (l - self.rhs).abs(),
            ConstraintKind::Geq => self.rhs - l,
            ConstraintKind::Leq => l - self.rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Maximize `c'x`.
    Maximize(Vec<f64>),
    /// Append a variable `t` to every LMI (`expr ⪰ (margin + t)I`) and maximize it;
    /// the solve succeeds only if `t ≥ threshold`.
    MaximizeMargin { threshold: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    pub num_vars: usize,
    pub lmis: Vec<LinearMatrixExpression>,
    pub linear: Vec<LinearConstraint>,
    pub objective: Objective,
}

impl ConicProblem {
    pub fn validate(&self) -> Result<(), ConicError> {
        if self.lmis.is_empty() && self.linear.is_empty() {
            return Err(ConicError::Malformed("no constraints".into()));
        }
        for l in &self.lmis {
            l.check(self.num_vars)?;
        }
        for c in &self.linear {
            if c.coeffs.iter().any(|(v, _)| *v >= self.num_vars) {
                return Err(ConicError::Malformed(
                    "linear constraint variable out of range".into(),
                ));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(ConicError::Malformed("non-finite linear constraint".into()));
            }
        }
        if let Objective::Maximize(c) = &self.objective {
            if c.len() != self.num_vars {
                return Err(ConicError::Malformed("objective length mismatch".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConicStatus {
    Optimal,
    Infeasible,
    MarginBelowThreshold,
    IterationLimit,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Values of the problem's own variables (the margin variable of
    /// `MaximizeMargin` is reported in `achieved_margin` only).
    pub values: Vec<f64>,
    /// Smallest eigenvalue gap over all LMIs (`λ_min` for `⪰`, `−λ_max` for `⪯`).
    pub achieved_margin: f64,
    pub objective_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    /// Newton-step budget for each phase.
    pub max_iter: usize,
    /// Bound on `|x_k|` keeping the barrier domain compact.
    pub box_bound: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            box_bound: 1e6,
        }
    }
}

/// A conic solver implementation.
pub trait ConicBackend {
    fn solve(
        &self,
        problem: &ConicProblem,
        opts: &SolverOptions,
    ) -> Result<ConicSolution, ConicError>;
}

/// Solve with the default barrier backend.
pub fn solve(
    problem: &ConicProblem,
    tol: f64,
    max_iter: usize,
) -> Result<ConicSolution, ConicError> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    BarrierSolver.solve(problem, &opts)
}

/// Independent check of a candidate point: every LMI slack and linear
/// constraint within `tol`.
pub fn verify_point(problem: &ConicProblem, x: &[f64], tol: f64) -> bool {
    problem.lmis.iter().all(|l| l.slack(x) >= -tol)
        && problem.linear.iter().all(|c| c.violation(x) <= tol)
}

/// Smallest LMI gap at `x` (`+inf` without LMIs).
pub fn min_gap(problem: &ConicProblem, x: &[f64]) -> f64 {
    problem
        .lmis
        .iter()
        .map(|l| l.gap(x))
        .fold(f64::INFINITY, f64::min)
}

/// Minimize `s` subject to `μ_f·I ⪯ P(x) ⪯ s·μ_f·I` and the constraints of
/// `base`. The returned values carry `s` as the last variable.
pub fn min_condition_number(
    p_expr: &LinearMatrixExpression,
    base: &ConicProblem,
    floor: f64,
    opts: &SolverOptions,
) -> Result<ConicSolution, ConicError> {
    if floor <= 0.0 {
        return Err(ConicError::Malformed(
            "condition floor must be positive".into(),
        ));
    }
    let s_idx = base.num_vars;
    let d = p_expr.dim();
    let mut lmis = base.lmis.clone();
    let mut lower = LinearMatrixExpression::geq(&p_expr.constant - DMatrix::identity(d, d) * floor);
    lower.terms = p_expr.terms.clone();
    lmis.push(lower);
    let mut upper = LinearMatrixExpression::leq(p_expr.constant.clone());
    upper.terms = p_expr.terms.clone();
    upper.add_term(s_idx, -DMatrix::identity(d, d) * floor);
    lmis.push(upper);
    let mut objective = vec![0.0; s_idx + 1];
    objective[s_idx] = -1.0;
    let problem = ConicProblem {
        num_vars: s_idx + 1,
        lmis,
        linear: base.linear.clone(),
        objective: Objective::Maximize(objective),
    };
    let mut sol = BarrierSolver.solve(&problem, opts)?;
    sol.objective_value = -sol.objective_value;
    Ok(sol)
}
