//! Log-barrier Newton method over free variables.
//!
//! Equalities are eliminated through a nullspace parameterization
//! `x = x0 + Z y`. A phase-I problem (maximize `s` with every constraint
//! shifted by `s`) produces a strictly feasible start, then the barrier
//! parameter is increased geometrically until the duality-gap bound `M/t`
//! drops below the tolerance.

use nalgebra::{DMatrix, DVector};

use super::{
    ConicBackend, ConicError, ConicProblem, ConicSolution, ConicStatus, ConstraintKind, LmiSense,
    Objective, SolverOptions, VERIFY_TOL,
};
use crate::linalg;

const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const T_GROWTH: f64 = 20.0;
const CENTER_TOL: f64 = 1e-10;

/// The default in-house backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct BarrierSolver;

/// `f0 + Σ y_j f_j ⪰ 0` after sign folding and equality elimination.
#[derive(Debug, Clone)]
struct Block {
    f0: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
}

/// `a0 + Σ a_j y_j > 0`.
#[derive(Debug, Clone)]
struct Scalar {
    a0: f64,
    a: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
struct Reduced {
    dim: usize,
    blocks: Vec<Block>,
    scalars: Vec<Scalar>,
    /// Barrier degree `M = Σ block sizes + #scalars`.
    degree: f64,
}

impl Reduced {
    fn with_shift(&self) -> Reduced {
        let s = self.dim;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let mut terms = b.terms.clone();
                let d = b.f0.nrows();
                terms.push((s, -DMatrix::identity(d, d)));
                Block {
                    f0: b.f0.clone(),
                    terms,
                }
            })
            .collect();
        let scalars = self
            .scalars
            .iter()
            .map(|c| {
                let mut a = c.a.clone();
                a.push((s, -1.0));
                Scalar { a0: c.a0, a }
            })
            .collect();
        Reduced {
            dim: s + 1,
            blocks,
            scalars,
            degree: self.degree,
        }
    }

    fn block_matrix(b: &Block, y: &DVector<f64>) -> DMatrix<f64> {
        let mut g = b.f0.clone();
        for (j, f) in &b.terms {
            g += f * y[*j];
        }
        g
    }

    fn scalar_value(c: &Scalar, y: &DVector<f64>) -> f64 {
        c.a0 + c.a.iter().map(|(j, a)| a * y[*j]).sum::<f64>()
    }

    /// Smallest slack over all constraints.
    fn min_slack(&self, y: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            m = m.min(linalg::s_min(&Self::block_matrix(b, y)));
        }
        for c in &self.scalars {
            m = m.min(Self::scalar_value(c, y));
        }
        m
    }

    /// Barrier value, or `None` outside the domain.
    fn value(&self, y: &DVector<f64>) -> Option<f64> {
        let mut phi = 0.0;
        for b in &self.blocks {
            let chol = Self::block_matrix(b, y).cholesky()?;
            let l = chol.l_dirty();
            let mut logdet = 0.0;
            for i in 0..l.nrows() {
                logdet += l[(i, i)].ln();
            }
            phi -= 2.0 * logdet;
        }
        for c in &self.scalars {
            let v = Self::scalar_value(c, y);
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
        }
        phi.is_finite().then_some(phi)
    }

    /// Barrier value, gradient and Hessian.
    fn derivatives(&self, y: &DVector<f64>) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = self.dim;
        let mut phi = 0.0;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let chol = Self::block_matrix(b, y).cholesky()?;
            let l = chol.l();
            for i in 0..l.nrows() {
                phi -= 2.0 * l[(i, i)].ln();
            }
            let scaled: Vec<(usize, DMatrix<f64>)> = b
                .terms
                .iter()
                .map(|(j, f)| {
                    let left = l.solve_lower_triangular(f).expect("nonsingular factor");
                    let g = l
                        .solve_lower_triangular(&left.transpose())
                        .expect("nonsingular factor");
                    (*j, g)
                })
                .collect();
            // variables are unique within a block's term list
            for (a, (ja, ga)) in scaled.iter().enumerate() {
                grad[*ja] -= ga.trace();
                hess[(*ja, *ja)] += ga.dot(ga);
                for (jb, gb) in scaled.iter().skip(a + 1) {
                    let v = ga.dot(gb);
                    hess[(*ja, *jb)] += v;
                    hess[(*jb, *ja)] += v;
                }
            }
        }
        for c in &self.scalars {
            let v = Self::scalar_value(c, y);
            if !(v > 0.0) {
                return None;
            }
            phi -= v.ln();
            for (ja, a) in &c.a {
                grad[*ja] -= a / v;
                for (jb, b) in &c.a {
                    hess[(*ja, *jb)] += a * b / (v * v);
                }
            }
        }
        phi.is_finite().then_some((phi, grad, hess))
    }
}

enum Centering {
    Done,
    Exit,
    Budget,
}

/// Damped Newton on `−t·c'y + φ(y)`; `exit` short-circuits after any step.
fn center(
    red: &Reduced,
    c: &DVector<f64>,
    t: f64,
    y: &mut DVector<f64>,
    iters: &mut usize,
    budget: usize,
    exit: &dyn Fn(&DVector<f64>) -> bool,
) -> Centering {
    loop {
        if *iters >= budget {
            return Centering::Budget;
        }
        let Some((phi, g, h)) = red.derivatives(y) else {
            return Centering::Done;
        };
        let grad = g - c * t;
        let Some(step) = newton_step(&h, &grad) else {
            return Centering::Done;
        };
        let slope = grad.dot(&step);
        if -slope / 2.0 <= CENTER_TOL {
            return Centering::Done;
        }
        let f0 = phi - t * c.dot(y);
        let mut alpha = 1.0;
        let accepted = loop {
            let cand = &*y + &step * alpha;
            if let Some(p) = red.value(&cand) {
                if p - t * c.dot(&cand) <= f0 + ARMIJO * alpha * slope {
                    break Some(cand);
                }
            }
            alpha *= BACKTRACK;
            if alpha < 1e-18 {
                break None;
            }
        };
        *iters += 1;
        match accepted {
            Some(cand) => {
                let f1 = red.value(&cand).unwrap_or(f64::INFINITY) - t * c.dot(&cand);
                *y = cand;
                // no measurable progress left at this precision
                if f0 - f1 <= 1e-13 * (1.0 + f0.abs()) {
                    return Centering::Done;
                }
            }
            None => return Centering::Done,
        }
        if exit(y) {
            return Centering::Exit;
        }
    }
}

fn newton_step(h: &DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let scale = (0..h.nrows())
        .map(|i| h[(i, i)].abs())
        .fold(0.0_f64, f64::max)
        .max(1e-300);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(ch) = hr.cholesky() {
            let step = ch.solve(&(-grad));
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        reg = if reg == 0.0 {
            1e-14 * scale
        } else {
            reg * 100.0
        };
    }
    None
}

struct Prepared {
    num_orig: usize,
    x0: DVector<f64>,
    z: DMatrix<f64>,
    red: Reduced,
    c: DVector<f64>,
    margin_var: Option<usize>,
}

fn prepare(problem: &ConicProblem, opts: &SolverOptions) -> Result<Option<Prepared>, ConicError> {
    let margin_var = match problem.objective {
        Objective::MaximizeMargin { .. } => Some(problem.num_vars),
        Objective::Maximize(_) => None,
    };
    let nx = problem.num_vars + usize::from(margin_var.is_some());
    let mut c_full = DVector::zeros(nx);
    match &problem.objective {
        Objective::Maximize(c) => c_full.rows_mut(0, c.len()).copy_from_slice(c),
        Objective::MaximizeMargin { .. } => c_full[nx - 1] = 1.0,
    }

    // fold signs and margins: G(x) = s·(C + Σ x F) − margin·I (− t·I)
    let mut folded: Vec<(DMatrix<f64>, Vec<(usize, DMatrix<f64>)>)> = Vec::new();
    for l in &problem.lmis {
        let s = match l.sense {
            LmiSense::Geq => 1.0,
            LmiSense::Leq => -1.0,
        };
        let d = l.dim();
        let g0 = &l.constant * s - DMatrix::identity(d, d) * l.margin;
        let mut terms: Vec<(usize, DMatrix<f64>)> =
            l.terms.iter().map(|(v, f)| (*v, f * s)).collect();
        if let Some(mv) = margin_var {
            terms.push((mv, -DMatrix::identity(d, d)));
        }
        folded.push((g0, terms));
    }
    let mut scal: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for lc in &problem.linear {
        match lc.kind {
            ConstraintKind::Eq => eq_rows.push((lc.coeffs.clone(), lc.rhs)),
            ConstraintKind::Geq => scal.push((-lc.rhs, lc.coeffs.clone())),
            ConstraintKind::Leq => {
                scal.push((lc.rhs, lc.coeffs.iter().map(|(v, a)| (*v, -a)).collect()))
            }
        }
    }
    for k in 0..nx {
        scal.push((opts.box_bound, vec![(k, -1.0)]));
        scal.push((opts.box_bound, vec![(k, 1.0)]));
    }

    let (x0, z) = if eq_rows.is_empty() {
        (DVector::zeros(nx), DMatrix::identity(nx, nx))
    } else {
        let mut a = DMatrix::zeros(eq_rows.len(), nx);
        let mut b = DVector::zeros(eq_rows.len());
        for (r, (coeffs, rhs)) in eq_rows.iter().enumerate() {
            for (v, c) in coeffs {
                a[(r, *v)] += c;
            }
            b[r] = *rhs;
        }
        let x0 = linalg::lstsq(&a, &b);
        let res = linalg::max_abs_vec(&(&a * &x0 - &b));
        if res > 1e-9 * (1.0 + linalg::max_abs_vec(&b)) {
            return Ok(None);
        }
        (x0, linalg::nullspace(&a, 1e-12))
    };
    let identity = eq_rows.is_empty();
    let dim = z.ncols();

    let mut blocks = Vec::new();
    let mut degree = 0.0;
    for (g0, terms) in folded {
        let d = g0.nrows();
        degree += d as f64;
        let mut f0 = g0;
        for (v, f) in &terms {
            if x0[*v] != 0.0 {
                f0 += f * x0[*v];
            }
        }
        let red_terms = if identity {
            let mut merged: Vec<(usize, DMatrix<f64>)> = Vec::new();
            for (v, f) in terms {
                match merged.iter_mut().find(|(w, _)| *w == v) {
                    Some((_, m)) => *m += f,
                    None => merged.push((v, f)),
                }
            }
            merged
        } else {
            let mut out = Vec::new();
            for j in 0..dim {
                let mut m = DMatrix::zeros(d, d);
                let mut any = false;
                for (v, f) in &terms {
                    let w = z[(*v, j)];
                    if w != 0.0 {
                        m += f * w;
                        any = true;
                    }
                }
                if any && linalg::max_abs(&m) > 1e-14 {
                    out.push((j, m));
                }
            }
            out
        };
        blocks.push(Block {
            f0,
            terms: red_terms,
        });
    }
    let mut scalars = Vec::new();
    for (a0, coeffs) in scal {
        degree += 1.0;
        let base: f64 = a0 + coeffs.iter().map(|(v, a)| a * x0[*v]).sum::<f64>();
        let a = if identity {
            coeffs
        } else {
            (0..dim)
                .filter_map(|j| {
                    let w: f64 = coeffs.iter().map(|(v, a)| a * z[(*v, j)]).sum();
                    (w.abs() > 1e-15).then_some((j, w))
                })
                .collect()
        };
        scalars.push(Scalar { a0: base, a });
    }
    let c = z.transpose() * &c_full;
    Ok(Some(Prepared {
        num_orig: problem.num_vars,
        x0,
        z,
        red: Reduced {
            dim,
            blocks,
            scalars,
            degree,
        },
        c,
        margin_var,
    }))
}

impl BarrierSolver {
    fn phase_one(
        red: &Reduced,
        opts: &SolverOptions,
        iters: &mut usize,
    ) -> Result<DVector<f64>, ConicStatus> {
        let start = DVector::zeros(red.dim);
        if red.min_slack(&start) > 0.0 {
            return Ok(start);
        }
        let shifted = red.with_shift();
        let s_idx = red.dim;
        let mut y = DVector::zeros(red.dim + 1);
        y[s_idx] = red.min_slack(&start) - 1.0;
        let mut c = DVector::zeros(red.dim + 1);
        c[s_idx] = 1.0;
        let exit = move |y: &DVector<f64>| y[s_idx] > 0.0;
        let mut t = 1.0 / (1.0 + y[s_idx].abs());
        loop {
            match center(&shifted, &c, t, &mut y, iters, opts.max_iter, &exit) {
                Centering::Exit => return Ok(y.rows(0, red.dim).into_owned()),
                Centering::Budget => return Err(ConicStatus::IterationLimit),
                Centering::Done => {}
            }
            let bound = shifted.degree / t;
            if y[s_idx] + bound < 0.0 || bound < opts.tol {
                return Err(ConicStatus::Infeasible);
            }
            t *= T_GROWTH;
        }
    }

    fn phase_two(
        red: &Reduced,
        c: &DVector<f64>,
        y: &mut DVector<f64>,
        opts: &SolverOptions,
        iters: &mut usize,
    ) -> ConicStatus {
        if c.norm() == 0.0 {
            // pure feasibility: re-center once so the point sits inside
            let mut it = 0;
            center(red, c, 0.0, y, &mut it, opts.max_iter, &|_| false);
            *iters += it;
            return ConicStatus::Optimal;
        }
        let mut t = 1.0;
        let mut budget_used = 0;
        loop {
            match center(red, c, t, y, &mut budget_used, opts.max_iter, &|_| false) {
                Centering::Budget => {
                    *iters += budget_used;
                    return ConicStatus::IterationLimit;
                }
                Centering::Done | Centering::Exit => {}
            }
            if red.degree / t <= opts.tol {
                *iters += budget_used;
                return ConicStatus::Optimal;
            }
            t *= T_GROWTH;
        }
    }
}

impl ConicBackend for BarrierSolver {
    fn solve(
        &self,
        problem: &ConicProblem,
        opts: &SolverOptions,
    ) -> Result<ConicSolution, ConicError> {
        problem.validate()?;
        let nv = problem.num_vars;
        let fail = |status| ConicSolution {
            status,
            values: vec![0.0; nv],
            achieved_margin: f64::NEG_INFINITY,
            objective_value: f64::NAN,
            iterations: 0,
        };
        let Some(prep) = prepare(problem, opts)? else {
            return Ok(fail(ConicStatus::Infeasible));
        };
        let mut iters = 0;
        let mut y = match Self::phase_one(&prep.red, opts, &mut iters) {
            Ok(y) => y,
            Err(status) => {
                let mut s = fail(status);
                s.iterations = iters;
                return Ok(s);
            }
        };
        let mut status = Self::phase_two(&prep.red, &prep.c, &mut y, opts, &mut iters);
        let x_full = &prep.x0 + &prep.z * &y;
        let values: Vec<f64> = x_full.iter().take(prep.num_orig).copied().collect();
        let shift = prep.margin_var.map(|k| x_full[k]).unwrap_or(0.0);
        let achieved_margin = problem
            .lmis
            .iter()
            .map(|l| l.slack(&values))
            .fold(f64::INFINITY, f64::min);
        // independent check on the original data
        let lmis_ok = problem
            .lmis
            .iter()
            .all(|l| l.slack(&values) - shift >= -VERIFY_TOL);
        let lin_ok = problem
            .linear
            .iter()
            .all(|c| c.violation(&values) <= VERIFY_TOL * (1.0 + c.rhs.abs()));
        if status == ConicStatus::Optimal && !(lmis_ok && lin_ok) {
            status = ConicStatus::IterationLimit;
        }
        let objective_value = match &problem.objective {
            Objective::Maximize(c) => c.iter().zip(&values).map(|(a, b)| a * b).sum(),
            Objective::MaximizeMargin { threshold } => {
                if status == ConicStatus::Optimal && shift < *threshold {
                    status = ConicStatus::MarginBelowThreshold;
                }
                shift
            }
        };
        Ok(ConicSolution {
            status,
            values,
            achieved_margin,
            objective_value,
            iterations: iters,
        })
    }
}
