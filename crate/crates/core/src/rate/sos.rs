//! The `β` search as a sum-of-squares program.
//!
//! The problem is posed for the normalized Lyapunov matrix `P̂ = P/s`,
//! `s = s_max(P)`, where `ĝ = g/s`, `ĥ = h/s²`, `r̂ = r/s` and `β = β̂/s`.
//! For each active mode two identities are imposed coefficient by
//! coefficient in `ζ`:
//!
//! ```text
//! z₂'G z₂ + z₁'F z₁ (r̂ − v̂) = ĝ² − b ĥ²        (lower bound on |g|)
//! z₂'G z₂ + z₁'F z₁ (r̂ − v̂) = 1 − b ĝ²         (upper bound on |g|)
//! ```
//!
//! with `z₂` all monomials of degree ≤ 2, `z₁ = [1, ζ]` and `b = β̂²`. Each
//! identity is a linear system in the Gram entries; its solutions are
//! parameterized locally as `u = u₀ + b·u₁ + Z y`, so the program is one
//! semidefinite problem in `(b, y)` maximizing `b`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::poly::{gram_poly, monomials, Exponent, Poly};
use super::{check_structure, GhEvaluator, RateError};
use crate::conic::{
    BarrierSolver, ConicBackend, ConicProblem, ConicStatus, LinearConstraint,
    LinearMatrixExpression, Objective, SolverOptions,
};
use crate::design::SwitchingLaw;
use crate::linalg;

/// Gram matrices are constrained to `⪰ −η·I` with this `η`.
pub const GRAM_RELAXATION: f64 = 5e-9;
/// Smallest Gram eigenvalue accepted by verification.
pub const GRAM_PSD_TOL: f64 = 1e-8;
/// Largest coefficient mismatch accepted by verification.
pub const RECONSTRUCTION_TOL: f64 = 1e-7;
/// Slack of the sampled bounds `βh_i ≤ |g_i| ≤ 1/β`.
pub const SOUNDNESS_TOL: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 0x5eed;

/// `SWITCHCTL_SEED` if set and numeric, otherwise [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var("SWITCHCTL_SEED")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SosConstraintKind {
    /// `g² − β²h² − φ(r − v) ∈ Σ²`
    Lower,
    /// `1 − β²g² − ψ(r − v) ∈ Σ²`
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaMethod {
    Direct,
    Bisection,
}

/// One verified SOS identity (normalized scale).
#[derive(Debug, Clone, PartialEq)]
pub struct QuarticGram {
    pub mode: usize,
    pub kind: SosConstraintKind,
    pub basis: Vec<Exponent>,
    pub gram: DMatrix<f64>,
    pub multiplier_basis: Vec<Exponent>,
    pub multiplier_gram: DMatrix<f64>,
    pub reconstruction_residual: f64,
    pub min_eigenvalue: f64,
    pub multiplier_min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundnessReport {
    pub samples: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// `max(βh_i − |g_i|)` over samples and modes.
    pub worst_lower: f64,
    /// `max(|g_i| − 1/β)` over samples and modes.
    pub worst_upper: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosResult {
    pub beta: f64,
    pub r: f64,
    /// `s_max(P)` used for normalization.
    pub scale: f64,
    /// Optimal `b = β̂²` of the normalized program.
    pub b: f64,
    pub certificates: Vec<QuarticGram>,
    pub soundness: SoundnessReport,
    pub method: BetaMethod,
    /// See [`GhEvaluator::structurally_degenerate`].
    pub structurally_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SosOptions {
    pub relaxation: f64,
    pub samples: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    pub bisection_steps: usize,
    /// Skip the direct solve and bisect on `b` from the start.
    pub force_bisection: bool,
}

impl Default for SosOptions {
    fn default() -> Self {
        Self {
            relaxation: GRAM_RELAXATION,
            samples: 1000,
            seed: seed_from_env(),
            solver: SolverOptions::default(),
            bisection_steps: 40,
            force_bisection: false,
        }
    }
}

/// One identity with its local affine parameterization.
struct Block {
    mode: usize,
    kind: SosConstraintKind,
    t0: Poly,
    t1: Poly,
    u0: DVector<f64>,
    u1: DVector<f64>,
    z: DMatrix<f64>,
    offset: usize,
}

fn upper_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        for b in a..k {
            out.push((a, b));
        }
    }
    out
}

fn to_matrix(entries: &[f64], k: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(k, k);
    for (v, (a, b)) in entries.iter().zip(upper_pairs(k)) {
        m[(a, b)] = *v;
        m[(b, a)] = *v;
    }
    m
}

struct Layout {
    z2: Vec<Exponent>,
    z1: Vec<Exponent>,
    slack: Poly,
    a: DMatrix<f64>,
    index: BTreeMap<Exponent, usize>,
}

impl Layout {
    fn new(n: usize, p_hat: &DMatrix<f64>, r_hat: f64) -> Self {
        let z2 = monomials(n, 2);
        let z1 = monomials(n, 1);
        let mons = monomials(n, 4);
        let index: BTreeMap<Exponent, usize> = mons
            .iter()
            .cloned()
            .enumerate()
            .map(|(k, e)| (e, k))
            .collect();
        let slack = Poly::constant(n, r_hat).sub(&Poly::quadratic_form(p_hat));
        let pairs2 = upper_pairs(z2.len());
        let pairs1 = upper_pairs(z1.len());
        let mut a = DMatrix::zeros(mons.len(), pairs2.len() + pairs1.len());
        for (col, &(i, j)) in pairs2.iter().enumerate() {
            let e: Exponent = z2[i].iter().zip(&z2[j]).map(|(x, y)| x + y).collect();
            a[(index[&e], col)] += if i == j { 1.0 } else { 2.0 };
        }
        for (k, &(i, j)) in pairs1.iter().enumerate() {
            let e: Exponent = z1[i].iter().zip(&z1[j]).map(|(x, y)| x + y).collect();
            let factor = if i == j { 1.0 } else { 2.0 };
            let prod = Poly::monomial(e, factor).mul(&slack);
            for (m, c) in prod.terms() {
                a[(index[m], pairs2.len() + k)] += c;
            }
        }
        Self {
            z2,
            z1,
            slack,
            a,
            index,
        }
    }

    fn vector(&self, p: &Poly) -> DVector<f64> {
        let mut v = DVector::zeros(self.index.len());
        for (e, c) in p.terms() {
            v[self.index[e]] += c;
        }
        v
    }

    fn n2(&self) -> usize {
        self.z2.len() * (self.z2.len() + 1) / 2
    }

    fn split(&self, u: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let n2 = self.n2();
        let g = to_matrix(&u.as_slice()[..n2], self.z2.len());
        let f = to_matrix(&u.as_slice()[n2..], self.z1.len());
        (g, f)
    }
}

fn build_blocks(
    layout: &Layout,
    ev: &GhEvaluator,
    active: &[usize],
    scale: f64,
) -> Result<Vec<Block>, RateError> {
    let n = ev.n();
    let zsp = linalg::nullspace(&layout.a, 1e-12);
    let mut blocks = Vec::new();
    let mut offset = 1;
    for &i in active {
        let g = ev.g_poly(i).scale(1.0 / scale);
        let h = ev.h_poly(i).scale(1.0 / (scale * scale));
        let g2 = g.mul(&g);
        let h2 = h.mul(&h);
        for (kind, t0, t1) in [
            (SosConstraintKind::Lower, g2.clone(), h2.scale(-1.0)),
            (
                SosConstraintKind::Upper,
                Poly::constant(n, 1.0),
                g2.scale(-1.0),
            ),
        ] {
            let v0 = layout.vector(&t0);
            let v1 = layout.vector(&t1);
            let u0 = linalg::lstsq(&layout.a, &v0);
            let u1 = linalg::lstsq(&layout.a, &v1);
            let res = linalg::max_abs_vec(&(&layout.a * &u0 - &v0))
                .max(linalg::max_abs_vec(&(&layout.a * &u1 - &v1)));
            if res > 1e-9 * (1.0 + linalg::max_abs_vec(&v0).max(linalg::max_abs_vec(&v1))) {
                return Err(RateError::Solver(format!(
                    "coefficient system inconsistent (residual {res:.3e})"
                )));
            }
            blocks.push(Block {
                mode: i,
                kind,
                t0,
                t1,
                u0,
                u1,
                z: zsp.clone(),
                offset,
            });
            offset += zsp.ncols();
        }
    }
    Ok(blocks)
}

/// Gram LMIs of all blocks. With `b_fixed` the variables are the `y` only.
fn gram_lmis(
    layout: &Layout,
    blocks: &[Block],
    b_fixed: Option<f64>,
    shift: f64,
) -> Vec<LinearMatrixExpression> {
    let n2 = layout.n2();
    let k2 = layout.z2.len();
    let k1 = layout.z1.len();
    let mut out = Vec::new();
    for blk in blocks {
        for (range, k) in [(0..n2, k2), (n2..blk.u0.len(), k1)] {
            let sl = |v: &DVector<f64>| to_matrix(&v.as_slice()[range.clone()], k);
            let base = match b_fixed {
                Some(b) => sl(&(&blk.u0 + &blk.u1 * b)),
                None => sl(&blk.u0),
            };
            let mut lmi = LinearMatrixExpression::geq(base + DMatrix::identity(k, k) * shift);
            let var_shift = if b_fixed.is_some() { 1 } else { 0 };
            if b_fixed.is_none() {
                lmi.add_term(0, sl(&blk.u1));
            }
            for j in 0..blk.z.ncols() {
                let col: DVector<f64> = blk.z.column(j).into_owned();
                let m = sl(&col);
                if linalg::max_abs(&m) > 1e-14 {
                    lmi.add_term(blk.offset + j - var_shift, m);
                }
            }
            out.push(lmi);
        }
    }
    out
}

fn num_y(blocks: &[Block]) -> usize {
    blocks.iter().map(|b| b.z.ncols()).sum()
}

fn direct(
    layout: &Layout,
    blocks: &[Block],
    opts: &SosOptions,
) -> Result<Option<(f64, Vec<f64>)>, RateError> {
    let nv = 1 + num_y(blocks);
    let mut c = vec![0.0; nv];
    c[0] = 1.0;
    let problem = ConicProblem {
        num_vars: nv,
        lmis: gram_lmis(layout, blocks, None, opts.relaxation),
        linear: vec![LinearConstraint::geq(vec![(0, 1.0)], 0.0)],
        objective: Objective::Maximize(c),
    };
    let sol = BarrierSolver
        .solve(&problem, &opts.solver)
        .map_err(|e| RateError::Solver(e.to_string()))?;
    if sol.status != ConicStatus::Optimal {
        return Ok(None);
    }
    Ok(Some((sol.values[0], sol.values[1..].to_vec())))
}

fn feasible_at(
    layout: &Layout,
    blocks: &[Block],
    b: f64,
    opts: &SosOptions,
) -> Result<Option<Vec<f64>>, RateError> {
    let problem = ConicProblem {
        num_vars: num_y(blocks),
        lmis: gram_lmis(layout, blocks, Some(b), 0.0),
        linear: Vec::new(),
        objective: Objective::MaximizeMargin {
            threshold: -opts.relaxation,
        },
    };
    let sol = BarrierSolver
        .solve(&problem, &opts.solver)
        .map_err(|e| RateError::Solver(e.to_string()))?;
    Ok((sol.status == ConicStatus::Optimal).then_some(sol.values))
}

fn bisection(
    layout: &Layout,
    blocks: &[Block],
    opts: &SosOptions,
) -> Result<(f64, Vec<f64>), RateError> {
    let Some(mut y_lo) = feasible_at(layout, blocks, 0.0, opts)? else {
        return Err(RateError::SosInfeasible(
            "identities infeasible already at β = 0".into(),
        ));
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    loop {
        match feasible_at(layout, blocks, hi, opts)? {
            Some(y) => {
                lo = hi;
                y_lo = y;
                hi *= 4.0;
                if hi > 1e12 {
                    return Err(RateError::SosInfeasible("β is unbounded".into()));
                }
            }
            None => break,
        }
    }
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        match feasible_at(layout, blocks, mid, opts)? {
            Some(y) => {
                lo = mid;
                y_lo = y;
            }
            None => hi = mid,
        }
    }
    Ok((lo, y_lo))
}

fn certificate(layout: &Layout, blk: &Block, b: f64, y: &[f64]) -> QuarticGram {
    let ys = DVector::from_column_slice(&y[blk.offset - 1..blk.offset - 1 + blk.z.ncols()]);
    let u = &blk.u0 + &blk.u1 * b + &blk.z * ys;
    let (g, f) = layout.split(&u);
    let lhs = gram_poly(&layout.z2, &g).add(&gram_poly(&layout.z1, &f).mul(&layout.slack));
    let rhs = blk.t0.add(&blk.t1.scale(b));
    QuarticGram {
        mode: blk.mode,
        kind: blk.kind,
        basis: layout.z2.clone(),
        reconstruction_residual: lhs.max_abs_diff(&rhs),
        min_eigenvalue: linalg::s_min(&g),
        multiplier_min_eigenvalue: linalg::s_min(&f),
        gram: g,
        multiplier_basis: layout.z1.clone(),
        multiplier_gram: f,
    }
}

/// Uniform samples of `{ζ : ζ'Pζ ≤ r}`.
pub fn sample_level_set(p: &DMatrix<f64>, r: f64, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let n = p.nrows();
    let eig = p.clone().symmetric_eigen();
    let inv_sqrt = DMatrix::from_diagonal(
        &eig.eigenvalues
            .map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt()),
    );
    let map = &eig.eigenvectors * inv_sqrt * eig.eigenvectors.transpose() * r.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = dir.norm().max(f64::MIN_POSITIVE);
            let radius = rng.random::<f64>().powf(1.0 / n as f64);
            &map * (dir * (radius / norm))
        })
        .collect()
}

fn soundness(
    ev: &GhEvaluator,
    active: &[usize],
    samples: &[DVector<f64>],
    beta: f64,
) -> SoundnessReport {
    let mut rep = SoundnessReport {
        samples: samples.len(),
        lower_violations: 0,
        upper_violations: 0,
        worst_lower: f64::NEG_INFINITY,
        worst_upper: f64::NEG_INFINITY,
        passed: true,
    };
    for z in samples {
        for &i in active {
            let g = ev.g_zeta(i, z).abs();
            let h = ev.h_zeta(i, z);
            let lo = beta * h - g;
            let up = g - 1.0 / beta;
            rep.worst_lower = rep.worst_lower.max(lo);
            rep.worst_upper = rep.worst_upper.max(up);
            if lo > SOUNDNESS_TOL {
                rep.lower_violations += 1;
            }
            if up > SOUNDNESS_TOL {
                rep.upper_violations += 1;
            }
        }
    }
    rep.passed = rep.lower_violations == 0 && rep.upper_violations == 0;
    rep
}

/// Largest `β` such that the SOS identities certify `βh_i ≤ |g_i| ≤ 1/β`
/// on `Ω(r)` for every active mode, with independently verified Gram
/// certificates and a sampled soundness check.
pub fn sos_find_beta(
    law: &SwitchingLaw,
    r: f64,
    opts: &SosOptions,
) -> Result<SosResult, RateError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(RateError::InvalidLevel(r));
    }
    let active = check_structure(law)?;
    let ev = GhEvaluator::new(law);
    if active.iter().all(|&i| ev.g_poly(i).max_abs_coeff() == 0.0) {
        return Err(RateError::SosInfeasible(
            "β is unbounded: every active g_i vanishes".into(),
        ));
    }
    let p = &law.certificate.p;
    let scale = linalg::s_max(p);
    let layout = Layout::new(ev.n(), &(p / scale), r / scale);
    let blocks = build_blocks(&layout, &ev, &active, scale)?;

    let direct_result = if opts.force_bisection {
        None
    } else {
        direct(&layout, &blocks, opts)?
    };
    let (b, y, method) = match direct_result {
        Some((b, y)) => (b, y, BetaMethod::Direct),
        None => {
            let (b, y) = bisection(&layout, &blocks, opts)?;
            (b, y, BetaMethod::Bisection)
        }
    };
    let certificates: Vec<QuarticGram> = blocks
        .iter()
        .map(|blk| certificate(&layout, blk, b, &y))
        .collect();
    for c in &certificates {
        if c.reconstruction_residual > RECONSTRUCTION_TOL
            || c.min_eigenvalue < -GRAM_PSD_TOL
            || c.multiplier_min_eigenvalue < -GRAM_PSD_TOL
        {
            return Err(RateError::SosInfeasible(format!(
                "certificate for mode {} ({:?}) failed verification: residual {:.3e}, eigenvalues {:.3e}/{:.3e}",
                c.mode + 1,
                c.kind,
                c.reconstruction_residual,
                c.min_eigenvalue,
                c.multiplier_min_eigenvalue
            )));
        }
    }
    if !(b > 0.0) {
        return Err(RateError::SosInfeasible(format!(
            "no positive β at r = {r}"
        )));
    }
    let beta = b.sqrt() / scale;
    let samples = sample_level_set(p, r, opts.samples, opts.seed);
    let report = soundness(&ev, &active, &samples, beta);
    Ok(SosResult {
        beta,
        r,
        scale,
        b,
        certificates,
        soundness: report,
        method,
        structurally_degenerate: active.iter().any(|&i| ev.structurally_degenerate(i)),
    })
}
