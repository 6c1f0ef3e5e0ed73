//! Dense two-phase simplex with Bland's rule for tiny linear programs.

use super::{ConicError, ConicProblem, ConicSolution, ConicStatus, ConstraintKind, Objective};

const TOL: f64 = 1e-10;

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
        }
        self.basis[r] = c;
    }

    /// Set the reduced-cost row for minimizing `cost` (indexed by column).
    fn price(&mut self, cost: &[f64]) {
        self.obj = vec![0.0; self.width + 1];
        self.obj[..cost.len()].copy_from_slice(cost);
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = self.obj[b];
            if cb != 0.0 {
                for (v, rv) in self.obj.iter_mut().zip(&self.rows[r]) {
                    *v -= cb * rv;
                }
            }
        }
    }

    /// Minimize over columns `< allowed`; `Ok(iterations)` or `Err(())` if unbounded.
    fn run(&mut self, allowed: usize, max_iter: usize) -> Result<usize, Option<usize>> {
        for it in 0..max_iter {
            let Some(c) = (0..allowed).find(|&j| self.obj[j] < -TOL) else {
                return Ok(it);
            };
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[c] > TOL {
                    let ratio = row[self.width] / row[c];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            if ratio < bv - TOL
                                || (ratio <= bv + TOL && self.basis[r] < self.basis[br])
                            {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return Err(None),
            }
        }
        Err(Some(max_iter))
    }
}

/// Solve a problem without matrix constraints. Variables are free; the
/// objective must be `Maximize`.
pub fn solve_lp(problem: &ConicProblem) -> Result<ConicSolution, ConicError> {
    problem.validate()?;
    if !problem.lmis.is_empty() {
        return Err(ConicError::Malformed(
            "solve_lp does not accept LMIs".into(),
        ));
    }
    let Objective::Maximize(c) = &problem.objective else {
        return Err(ConicError::Malformed(
            "solve_lp needs a linear objective".into(),
        ));
    };
    let nv = problem.num_vars;
    // columns: x⁺ (nv), x⁻ (nv), one slack per inequality, one artificial per row
    let n_slack = problem
        .linear
        .iter()
        .filter(|l| l.kind != ConstraintKind::Eq)
        .count();
    let m = problem.linear.len();
    let n_struct = 2 * nv + n_slack;
    let width = n_struct + m;
    let mut rows = Vec::with_capacity(m);
    let mut slack = 0;
    for (r, lc) in problem.linear.iter().enumerate() {
        let mut row = vec![0.0; width + 1];
        for (v, a) in &lc.coeffs {
            row[*v] += a;
            row[nv + *v] -= a;
        }
        match lc.kind {
            ConstraintKind::Eq => {}
            ConstraintKind::Geq => {
                row[2 * nv + slack] = -1.0;
                slack += 1;
            }
            ConstraintKind::Leq => {
                row[2 * nv + slack] = 1.0;
                slack += 1;
            }
        }
        row[width] = lc.rhs;
        if lc.rhs < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        row[n_struct + r] = 1.0;
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        obj: Vec::new(),
        basis: (n_struct..width).collect(),
        width,
    };
    let max_iter = 50 * (width + m + 10);

    let mut phase1 = vec![0.0; width];
    for v in phase1.iter_mut().skip(n_struct) {
        *v = 1.0;
    }
    tab.price(&phase1);
    let mut iterations = match tab.run(width, max_iter) {
        Ok(it) => it,
        Err(_) => return Ok(status_only(ConicStatus::IterationLimit, nv)),
    };
    let infeasibility = -tab.obj[width];
    let scale = problem
        .linear
        .iter()
        .map(|l| l.rhs.abs())
        .fold(1.0, f64::max);
    if infeasibility > 1e-9 * scale {
        return Ok(status_only(ConicStatus::Infeasible, nv));
    }
    // drive zero-level artificials out of the basis, dropping redundant rows
    let mut r = 0;
    while r < tab.rows.len() {
        if tab.basis[r] >= n_struct {
            match (0..n_struct).find(|&j| tab.rows[r][j].abs() > 1e-9) {
                Some(j) => {
                    tab.pivot(r, j);
                    r += 1;
                }
                None => {
                    tab.rows.remove(r);
                    tab.basis.remove(r);
                }
            }
        } else {
            r += 1;
        }
    }

    let mut phase2 = vec![0.0; width];
    for (j, cj) in c.iter().enumerate() {
        phase2[j] = -cj;
        phase2[nv + j] = *cj;
    }
    tab.price(&phase2);
    match tab.run(n_struct, max_iter) {
        Ok(it) => iterations += it,
        Err(None) => return Ok(status_only(ConicStatus::Unbounded, nv)),
        Err(Some(_)) => return Ok(status_only(ConicStatus::IterationLimit, nv)),
    }
    let mut std_x = vec![0.0; width];
    for (r, &b) in tab.basis.iter().enumerate() {
        std_x[b] = tab.rows[r][width];
    }
    let values: Vec<f64> = (0..nv).map(|j| std_x[j] - std_x[nv + j]).collect();
    let objective_value = c.iter().zip(&values).map(|(a, b)| a * b).sum();
    Ok(ConicSolution {
        status: ConicStatus::Optimal,
        values,
        achieved_margin: f64::INFINITY,
        objective_value,
        iterations,
    })
}

fn status_only(status: ConicStatus, nv: usize) -> ConicSolution {
    ConicSolution {
        status,
        values: vec![0.0; nv],
        achieved_margin: f64::NEG_INFINITY,
        objective_value: f64::NAN,
        iterations: 0,
    }
}
