//! Local exponential-rate certificates for a designed switching law.
//!
//! For `ε > 0` the weights `γ(λ, ±ε, i)` move `λ` toward and away from the
//! vertex `e_i`. A matrix `G_ε ≻ 0` bounding `He(S̄A_γV̄)` for every active
//! mode and both signs, together with a scalar `β` for which
//! `β·h_i ≤ |g_i| ≤ 1/β` on a level set `Ω(r)`, gives
//! `v̇ ≤ −ζ'Qζ` there and hence the rate `α = s_min(Q)/s_max(P)`.
//! `β` comes from a degree-4 sum-of-squares program (see [`sos_find_beta`]).

mod poly;
mod sos;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::conic::{
    self, ConicProblem, ConicStatus, LinearMatrixExpression, Objective, SolverOptions,
};
use crate::design::SwitchingLaw;
use crate::equilibria;
use crate::linalg;
use crate::sysmodel::SimplexVector;

pub use poly::{gram_poly, monomials, Exponent, Poly};
pub use sos::{
    sample_level_set, seed_from_env, sos_find_beta, BetaMethod, QuarticGram, SosConstraintKind,
    SosOptions, SosResult, SoundnessReport, DEFAULT_SEED, GRAM_PSD_TOL, GRAM_RELAXATION,
    RECONSTRUCTION_TOL, SOUNDNESS_TOL,
};

/// Weights at or below this are treated as zero.
pub const ACTIVE_TOL: f64 = 1e-12;
/// Slack allowed on the `γ` domain bounds.
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("DomainViolation: ε = {epsilon} outside [{lower}, 1] for mode {mode}")]
    Domain {
        epsilon: f64,
        lower: f64,
        mode: usize,
    },
    #[error("RhoNotPositive: ρ = {rho:.3e} at ε = {epsilon}")]
    RhoNotPositive { rho: f64, epsilon: f64 },
    #[error("RankDeficient: rank(ML) = {rank}, m = {m}")]
    RankDeficient { rank: usize, m: usize },
    #[error("NullspaceNotShared: A_i V⊥ ≠ 0 for active mode {mode}")]
    NullspaceNotShared { mode: usize },
    #[error("InvalidLevel: r = {0}")]
    InvalidLevel(f64),
    #[error("SosInfeasible: {0}")]
    SosInfeasible(String),
    #[error("NoValidEpsilon: ρ ≤ 0 on the whole ε grid")]
    NoValidEpsilon,
    #[error("SolverFailure: {0}")]
    Solver(String),
    #[error("Dimension: {0}")]
    Dimension(String),
}

impl RateError {
    /// Name of the failed hypothesis, `None` for numerical/solver failures.
    pub fn hypothesis(&self) -> Option<&'static str> {
        match self {
            RateError::Domain { .. } => Some("DomainViolation"),
            RateError::RhoNotPositive { .. } => Some("RhoNotPositive"),
            RateError::RankDeficient { .. } => Some("RankDeficient"),
            RateError::NullspaceNotShared { .. } => Some("NullspaceNotShared"),
            RateError::SosInfeasible(_) => Some("SosInfeasible"),
            RateError::NoValidEpsilon => Some("NoValidEpsilon"),
            RateError::InvalidLevel(_) | RateError::Dimension(_) => Some("InvalidInput"),
            RateError::Solver(_) => None,
        }
    }
}

/// Indices (0-based) with `λ_i > 1e-12`.
pub fn active_set(lambda: &SimplexVector) -> Vec<usize> {
    lambda
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > ACTIVE_TOL)
        .map(|(i, _)| i)
        .collect()
}

/// Lower end `ε̲_i` of the domain of `γ(λ, ·, i)`.
pub fn epsilon_lower(lambda: &SimplexVector, i: usize) -> f64 {
    let w = lambda.weights();
    let mut lo = f64::NEG_INFINITY;
    if w[i] < 1.0 {
        lo = lo.max(w[i] / (w[i] - 1.0));
    }
    for (j, &wj) in w.iter().enumerate() {
        if j != i && wj > 0.0 {
            lo = lo.max((wj - 1.0) / wj);
        }
    }
    lo
}

/// Largest `ε ≤ 1` with `γ(λ, ±ε, i) ∈ Λ` for every active `i`.
pub fn epsilon_max(lambda: &SimplexVector) -> f64 {
    active_set(lambda)
        .into_iter()
        .map(|i| -epsilon_lower(lambda, i))
        .fold(1.0, f64::min)
}

/// `γ(λ, ε, i) = (1 − ε)λ + εe_i`, defined for `ε ∈ [ε̲_i, 1]`.
pub fn gamma(lambda: &SimplexVector, epsilon: f64, i: usize) -> Result<SimplexVector, RateError> {
    let k = lambda.len();
    if i >= k {
        return Err(RateError::Dimension(format!(
            "mode {i} out of range for {k} modes"
        )));
    }
    let lower = epsilon_lower(lambda, i);
    if !epsilon.is_finite() || epsilon < lower - DOMAIN_TOL || epsilon > 1.0 + DOMAIN_TOL {
        return Err(RateError::Domain {
            epsilon,
            lower,
            mode: i,
        });
    }
    let w: Vec<f64> = lambda
        .weights()
        .iter()
        .enumerate()
        .map(|(j, &l)| {
            let v = if j == i {
                l + epsilon * (1.0 - l)
            } else {
                l - epsilon * l
            };
            v.max(0.0)
        })
        .collect();
    SimplexVector::new(w).map_err(|e| RateError::Dimension(e.to_string()))
}

/// Checks the structural preconditions shared by every rate computation and
/// returns the active set.
fn check_structure(law: &SwitchingLaw) -> Result<Vec<usize>, RateError> {
    let active = active_set(&law.certificate.lambda);
    if let Some(&mode) = active.iter().find(|i| !law.shared.contains(i)) {
        return Err(RateError::NullspaceNotShared { mode });
    }
    Ok(active)
}

/// `rank(ML)` with `L = [ℓ_i]` over the active set, and `m`.
pub fn rank_ml(law: &SwitchingLaw) -> Result<(usize, usize), RateError> {
    let cert = &law.certificate;
    let m_mat = equilibria::compute_m(&cert.a_lambda, &cert.decomp)
        .map_err(|e| RateError::Dimension(e.to_string()))?;
    let active = active_set(&cert.lambda);
    let l = DMatrix::from_columns(
        &active
            .iter()
            .map(|&i| law.ell[i].clone())
            .collect::<Vec<_>>(),
    );
    let ml = m_mat * l;
    Ok((linalg::rank(&ml, 1e-9), cert.decomp.m))
}

/// `He(S̄A_γV̄)` for every active `i` and both signs of `ε`.
pub fn perturbed_blocks(law: &SwitchingLaw, epsilon: f64) -> Result<Vec<DMatrix<f64>>, RateError> {
    let cert = &law.certificate;
    let mut out = Vec::new();
    for i in active_set(&cert.lambda) {
        for e in [epsilon, -epsilon] {
            let g = gamma(&cert.lambda, e, i)?;
            let a = g.combine_matrices(law.system.a_all());
            out.push(linalg::he(&(&law.s_bar * a * &cert.decomp.v_bar)));
        }
    }
    Ok(out)
}

/// `ρ(ε) = −max λ_max(He(S̄A_{γ(λ,±ε,i)}V̄))`, so that `G_ε = ρI` works.
pub fn find_rho(law: &SwitchingLaw, epsilon: f64) -> Result<f64, RateError> {
    let blocks = perturbed_blocks(law, epsilon)?;
    let rho = -blocks
        .iter()
        .map(linalg::s_max)
        .fold(f64::NEG_INFINITY, f64::max);
    if rho > 0.0 {
        Ok(rho)
    } else {
        Err(RateError::RhoNotPositive { rho, epsilon })
    }
}

/// `g_i` and `h_i` in `ζ` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GhEvaluator {
    basis: DMatrix<f64>,
    p: usize,
    u: Vec<DMatrix<f64>>,
    w: Vec<DVector<f64>>,
}

impl GhEvaluator {
    pub fn new(law: &SwitchingLaw) -> Self {
        let w = law
            .ell
            .iter()
            .map(|l| {
                let top = &law.s_bar * l;
                let bottom = &law.s_perp * l;
                DVector::from_iterator(
                    top.len() + bottom.len(),
                    top.iter().chain(bottom.iter()).copied(),
                )
            })
            .collect();
        Self {
            basis: law.certificate.decomp.basis(),
            p: law.certificate.decomp.p(),
            u: law.u.clone(),
            w,
        }
    }

    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// `[S̄ℓ_i; S⊥ℓ_i]`.
    pub fn w(&self, i: usize) -> &DVector<f64> {
        &self.w[i]
    }

    pub fn zeta(&self, xi: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * xi
    }

    pub fn g_zeta(&self, i: usize, zeta: &DVector<f64>) -> f64 {
        let n = self.n();
        let zb = zeta.rows(0, self.p);
        let zp = zeta.rows(self.p, n - self.p);
        zb.dot(&(&self.u[i] * zp)) + self.w[i].dot(zeta)
    }

    pub fn h_zeta(&self, i: usize, zeta: &DVector<f64>) -> f64 {
        0.5 * self.w[i].dot(zeta).powi(2)
    }

    /// `g_i(ξ) = ξ̄'U_iξ⊥ + ξ̄'S̄ℓ_i + ξ⊥'S⊥ℓ_i`.
    pub fn g(&self, i: usize, xi: &DVector<f64>) -> f64 {
        self.g_zeta(i, &self.zeta(xi))
    }

    /// `h_i(ξ) = ½(ζ'[S̄ℓ_i; S⊥ℓ_i])²`.
    pub fn h(&self, i: usize, xi: &DVector<f64>) -> f64 {
        self.h_zeta(i, &self.zeta(xi))
    }

    pub fn g_poly(&self, i: usize) -> Poly {
        let n = self.n();
        let mut q = DMatrix::zeros(n, n);
        let u = &self.u[i];
        for a in 0..self.p {
            for b in 0..n - self.p {
                q[(a, self.p + b)] = 0.5 * u[(a, b)];
                q[(self.p + b, a)] = 0.5 * u[(a, b)];
            }
        }
        Poly::quadratic_form(&q).add(&Poly::linear(&self.w[i]))
    }

    pub fn h_poly(&self, i: usize) -> Poly {
        Poly::quadratic_form(&(&self.w[i] * self.w[i].transpose() * 0.5))
    }

    /// True when `g_i` vanishes at points with `h_i > 0` arbitrarily close to
    /// the origin: the quadratic part of `g_i` is not identically zero on the
    /// hyperplane `w_i'ζ = 0`. Then `|g_i| ≥ βh_i` holds near the origin for
    /// no `β > 0` and any certified `β` rests on the Gram tolerance.
    pub fn structurally_degenerate(&self, i: usize) -> bool {
        let n = self.n();
        let w = &self.w[i];
        let wn = w.norm();
        let uq = self.u[i].clone();
        if wn == 0.0 || linalg::max_abs(&uq) == 0.0 {
            return false;
        }
        let mut q = DMatrix::zeros(n, n);
        for a in 0..self.p {
            for b in 0..n - self.p {
                q[(a, self.p + b)] = 0.5 * uq[(a, b)];
                q[(self.p + b, a)] = 0.5 * uq[(a, b)];
            }
        }
        let proj = DMatrix::identity(n, n) - w * w.transpose() / (wn * wn);
        let restricted = &proj * q * &proj;
        linalg::max_abs(&restricted) > 1e-9 * linalg::max_abs(&uq)
    }
}

/// `Q = [[G,0],[0,0]] + εβ Σ π_i w_iw_i'`.
pub fn q_matrix(
    g_eps: &DMatrix<f64>,
    m: usize,
    epsilon: f64,
    beta: f64,
    directions: &[DVector<f64>],
    weights: &[f64],
) -> DMatrix<f64> {
    let p = g_eps.nrows();
    let n = p + m;
    let mut q = DMatrix::zeros(n, n);
    q.view_mut((0, 0), (p, p)).copy_from(g_eps);
    for (w, pi) in directions.iter().zip(weights) {
        q += w * w.transpose() * (epsilon * beta * pi);
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateStatus {
    /// `Q ≻ 0`, `α > 0`.
    Certified,
    /// `Q` is singular to working precision; no positive rate.
    Singular,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    /// Uniform ε grid size over `(0, ε_max]`.
    pub grid_points: usize,
    /// Points of the single refinement pass around the best grid point.
    pub refine_points: usize,
    /// Explicit ε grid; replaces the uniform one (no refinement).
    pub epsilon_grid: Option<Vec<f64>>,
    /// Solve for a full `G_ε` instead of `ρI`.
    pub general_g: bool,
    /// Averaging weights over the active set (default uniform).
    pub weights: Option<Vec<f64>>,
    /// Skip the SOS search and use this `β`.
    pub beta: Option<f64>,
    pub sos: SosOptions,
    pub solver: SolverOptions,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            grid_points: 50,
            refine_points: 20,
            epsilon_grid: None,
            general_g: false,
            weights: None,
            beta: None,
            sos: SosOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    pub alpha: f64,
    pub epsilon: f64,
    /// `λ_min(G_ε)`; equals the scalar of `G_ε = ρI` in the default mode.
    pub rho: f64,
    pub g_eps: DMatrix<f64>,
    pub beta: f64,
    pub r: f64,
    pub q: DMatrix<f64>,
    pub p_max: f64,
    pub status: RateStatus,
    /// Active modes (0-based).
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
    pub sos: Option<SosResult>,
}

impl RateCertificate {
    pub fn q_eigenvalues(&self) -> Vec<f64> {
        linalg::sym_eigenvalues(&self.q)
    }
}

fn resolve_weights(active: &[usize], weights: &Option<Vec<f64>>) -> Result<Vec<f64>, RateError> {
    match weights {
        None => Ok(vec![1.0 / active.len() as f64; active.len()]),
        Some(w) => {
            if w.len() != active.len() {
                return Err(RateError::Dimension(format!(
                    "{} averaging weights for {} active modes",
                    w.len(),
                    active.len()
                )));
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(RateError::Dimension(
                    "averaging weights must lie in the simplex".into(),
                ));
            }
            Ok(w.clone())
        }
    }
}

/// Largest `t` with `Q(G) ⪰ tI` over `0 ⪯ G ⪯ −He(S̄A_γV̄)` for all blocks.
fn general_g(
    blocks: &[DMatrix<f64>],
    m: usize,
    fixed: &DMatrix<f64>,
    t_ref: f64,
    opts: &SolverOptions,
) -> Result<Option<DMatrix<f64>>, RateError> {
    // solve on data of unit size
    let scale = blocks
        .iter()
        .map(linalg::max_abs)
        .fold(linalg::max_abs(fixed), f64::max)
        .max(f64::MIN_POSITIVE);
    let blocks: Vec<DMatrix<f64>> = blocks.iter().map(|b| b / scale).collect();
    let fixed = fixed / scale;
    let p = blocks[0].nrows();
    let n = p + m;
    let mut idx = Vec::new();
    for a in 0..p {
        for b in a..p {
            idx.push((a, b));
        }
    }
    let t_var = idx.len();
    let unit = |a: usize, b: usize, dim: usize| {
        let mut e = DMatrix::zeros(dim, dim);
        e[(a, b)] = 1.0;
        e[(b, a)] = 1.0;
        e
    };
    let mut lmis = Vec::new();
    for blk in &blocks {
        let mut l = LinearMatrixExpression::leq(blk.clone());
        for (k, &(a, b)) in idx.iter().enumerate() {
            l.add_term(k, unit(a, b, p));
        }
        lmis.push(l);
    }
    let mut pos = LinearMatrixExpression::geq(DMatrix::zeros(p, p));
    for (k, &(a, b)) in idx.iter().enumerate() {
        pos.add_term(k, unit(a, b, p));
    }
    lmis.push(pos);
    let mut q = LinearMatrixExpression::geq(fixed);
    for (k, &(a, b)) in idx.iter().enumerate() {
        q.add_term(k, unit(a, b, n));
    }
    // t is measured in units of t_ref so the tolerance is relative
    q.add_term(t_var, -DMatrix::identity(n, n) * (t_ref / scale));
    lmis.push(q);
    let mut c = vec![0.0; t_var + 1];
    c[t_var] = 1.0;
    let problem = ConicProblem {
        num_vars: t_var + 1,
        lmis,
        linear: Vec::new(),
        objective: Objective::Maximize(c),
    };
    let sol = conic::solve(&problem, opts.tol, opts.max_iter)
        .map_err(|e| RateError::Solver(e.to_string()))?;
    if sol.status != ConicStatus::Optimal {
        return Ok(None);
    }
    let mut g = DMatrix::zeros(p, p);
    for (k, &(a, b)) in idx.iter().enumerate() {
        g[(a, b)] = sol.values[k] * scale;
        g[(b, a)] = sol.values[k] * scale;
    }
    Ok(Some(g))
}

/// `(α, G_ε, Q)` at one `(ε, β)`; `None` when no admissible `G_ε` exists.
fn evaluate_point(
    law: &SwitchingLaw,
    epsilon: f64,
    beta: f64,
    ctx: &Context,
    opts: &RateOptions,
) -> Result<Option<(f64, DMatrix<f64>, DMatrix<f64>)>, RateError> {
    let blocks = perturbed_blocks(law, epsilon)?;
    let p = law.certificate.decomp.p();
    let m = law.certificate.decomp.m;
    let g_eps = if opts.general_g {
        let fixed = q_matrix(
            &DMatrix::zeros(p, p),
            m,
            epsilon,
            beta,
            &ctx.directions,
            &ctx.weights,
        );
        let rho = -blocks
            .iter()
            .map(linalg::s_max)
            .fold(f64::NEG_INFINITY, f64::max);
        let t_ref = if rho > 0.0 {
            linalg::s_min(
                &(&fixed + q_matrix(&(DMatrix::identity(p, p) * rho), m, 0.0, 0.0, &[], &[])),
            )
        } else {
            0.0
        };
        let t_ref = if t_ref > 0.0 {
            t_ref
        } else {
            linalg::max_abs(&fixed).max(f64::MIN_POSITIVE)
        };
        match general_g(&blocks, m, &fixed, t_ref, &opts.solver)? {
            Some(g) => g,
            None => return Ok(None),
        }
    } else {
        let rho = -blocks
            .iter()
            .map(linalg::s_max)
            .fold(f64::NEG_INFINITY, f64::max);
        if rho <= 0.0 {
            return Ok(None);
        }
        DMatrix::identity(p, p) * rho
    };
    let q = q_matrix(&g_eps, m, epsilon, beta, &ctx.directions, &ctx.weights);
    let alpha = linalg::s_min(&q) / ctx.p_max;
    Ok(Some((alpha, g_eps, q)))
}

struct Context {
    active: Vec<usize>,
    directions: Vec<DVector<f64>>,
    weights: Vec<f64>,
    p_max: f64,
}

fn context(law: &SwitchingLaw, weights: &Option<Vec<f64>>) -> Result<Context, RateError> {
    let active = check_structure(law)?;
    let (rank, m) = rank_ml(law)?;
    if rank != m {
        return Err(RateError::RankDeficient { rank, m });
    }
    let ev = GhEvaluator::new(law);
    Ok(Context {
        directions: active.iter().map(|&i| ev.w(i).clone()).collect(),
        weights: resolve_weights(&active, weights)?,
        active,
        p_max: linalg::s_max(&law.certificate.p),
    })
}

/// Rate `α` for fixed `(ε, β)`, without any SOS step.
pub fn rate_at(
    law: &SwitchingLaw,
    epsilon: f64,
    beta: f64,
    opts: &RateOptions,
) -> Result<(f64, DMatrix<f64>), RateError> {
    let ctx = context(law, &opts.weights)?;
    match evaluate_point(law, epsilon, beta, &ctx, opts)? {
        Some((alpha, _, q)) => Ok((alpha, q)),
        None => Err(RateError::RhoNotPositive { rho: 0.0, epsilon }),
    }
}

fn default_grid(e_max: f64, points: usize) -> Vec<f64> {
    (1..=points)
        .map(|k| e_max * k as f64 / points as f64)
        .collect()
}

/// Certify a local rate on `Ω(r)`: `β` from the SOS program (unless
/// overridden), then the best `ε` over the grid.
pub fn certify_rate(
    law: &SwitchingLaw,
    r: f64,
    opts: &RateOptions,
) -> Result<RateCertificate, RateError> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(RateError::InvalidLevel(r));
    }
    let ctx = context(law, &opts.weights)?;
    let (beta, sos) = match opts.beta {
        Some(b) if b > 0.0 && b.is_finite() => (b, None),
        Some(b) => {
            return Err(RateError::SosInfeasible(format!(
                "β override {b} is not positive"
            )))
        }
        None => {
            let res = sos_find_beta(law, r, &opts.sos)?;
            (res.beta, Some(res))
        }
    };
    let e_max = epsilon_max(&law.certificate.lambda);
    let explicit = opts.epsilon_grid.is_some();
    let grid = opts
        .epsilon_grid
        .clone()
        .unwrap_or_else(|| default_grid(e_max, opts.grid_points.max(1)));

    let mut best: Option<(f64, f64, DMatrix<f64>, DMatrix<f64>)> = None;
    let consider = |eps: f64,
                    best: &mut Option<(f64, f64, DMatrix<f64>, DMatrix<f64>)>|
     -> Result<(), RateError> {
        if let Some((alpha, g, q)) = evaluate_point(law, eps, beta, &ctx, opts)? {
            if best.as_ref().is_none_or(|b| alpha > b.0) {
                *best = Some((alpha, eps, g, q));
            }
        }
        Ok(())
    };
    for &eps in &grid {
        consider(eps, &mut best)?;
    }
    if !explicit && opts.refine_points > 0 {
        if let Some((_, eps0, _, _)) = best.clone() {
            let step = e_max / opts.grid_points.max(1) as f64;
            let lo = (eps0 - step).max(0.0);
            let hi = (eps0 + step).min(e_max);
            for k in 1..=opts.refine_points {
                let eps = lo + (hi - lo) * k as f64 / (opts.refine_points + 1) as f64;
                if eps > 0.0 {
                    consider(eps, &mut best)?;
                }
            }
        }
    }
    let (alpha, epsilon, g_eps, q) = best.ok_or(RateError::NoValidEpsilon)?;
    let q_scale = linalg::s_max(&q).max(f64::MIN_POSITIVE);
    let status = if linalg::s_min(&q) > 1e-12 * q_scale {
        RateStatus::Certified
    } else {
        RateStatus::Singular
    };
    Ok(RateCertificate {
        alpha,
        epsilon,
        rho: linalg::s_min(&g_eps),
        g_eps,
        beta,
        r,
        q,
        p_max: ctx.p_max,
        status,
        active: ctx.active,
        weights: ctx.weights,
        sos,
    })
}

/// Smallest level set containing the ball `{ζ'ζ ≤ R}`: `r = R·s_max(P)`.
pub fn level_from_radius(law: &SwitchingLaw, radius_sq: f64) -> f64 {
    radius_sq * linalg::s_max(&law.certificate.p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub r: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub alpha: f64,
    /// Failure reason; the numeric fields are NaN when set.
    pub error: Option<String>,
}

/// [`certify_rate`] at several levels, evaluated concurrently.
pub fn certify_levels(
    law: &SwitchingLaw,
    levels: &[f64],
    opts: &RateOptions,
) -> Vec<Result<RateCertificate, RateError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = levels
            .iter()
            .map(|&r| s.spawn(move || certify_rate(law, r, opts)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("rate worker panicked"))
            .collect()
    })
}

impl CurvePoint {
    pub fn from_result(r: f64, res: &Result<RateCertificate, RateError>) -> Self {
        match res {
            Ok(c) => CurvePoint {
                r,
                beta: c.beta,
                epsilon: c.epsilon,
                alpha: c.alpha,
                error: None,
            },
            Err(e) => CurvePoint {
                r,
                beta: f64::NAN,
                epsilon: f64::NAN,
                alpha: f64::NAN,
                error: Some(e.to_string()),
            },
        }
    }
}

/// `α(r)` over several levels.
pub fn alpha_curve(law: &SwitchingLaw, levels: &[f64], opts: &RateOptions) -> Vec<CurvePoint> {
    certify_levels(law, levels, opts)
        .iter()
        .zip(levels)
        .map(|(res, &r)| CurvePoint::from_result(r, res))
        .collect()
}

/// CSV with header `r,beta,epsilon,alpha`.
pub fn write_curve_csv<W: Write>(out: W, points: &[CurvePoint]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["r", "beta", "epsilon", "alpha"])?;
    for p in points {
        w.write_record([p.r, p.beta, p.epsilon, p.alpha].map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_file(path: &Path, points: &[CurvePoint]) -> Result<(), csv::Error> {
    write_curve_csv(std::fs::File::create(path)?, points)
}

/// Digest of one Gram certificate for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GramDigest {
    pub mode: usize,
    pub kind: SosConstraintKind,
    pub size: usize,
    pub min_eigenvalue: f64,
    pub trace: f64,
    pub multiplier_min_eigenvalue: f64,
    pub reconstruction_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDocument {
    pub alpha: f64,
    pub epsilon: f64,
    pub rho: f64,
    pub beta: f64,
    pub r: f64,
    pub status: RateStatus,
    pub q_eigenvalues: Vec<f64>,
    pub active_modes: Vec<usize>,
    pub beta_method: Option<BetaMethod>,
    pub structurally_degenerate: Option<bool>,
    pub soundness: Option<SoundnessReport>,
    pub grams: Vec<GramDigest>,
}

impl RateDocument {
    pub fn new(c: &RateCertificate) -> Self {
        let grams = c
            .sos
            .as_ref()
            .map(|s| {
                s.certificates
                    .iter()
                    .map(|g| GramDigest {
                        mode: g.mode,
                        kind: g.kind,
                        size: g.gram.nrows(),
                        min_eigenvalue: g.min_eigenvalue,
                        trace: g.gram.trace(),
                        multiplier_min_eigenvalue: g.multiplier_min_eigenvalue,
                        reconstruction_residual: g.reconstruction_residual,
                    })
                    .collect()
            })
            .unwrap_or_default();
        Self {
            alpha: c.alpha,
            epsilon: c.epsilon,
            rho: c.rho,
            beta: c.beta,
            r: c.r,
            status: c.status,
            q_eigenvalues: c.q_eigenvalues(),
            active_modes: c.active.clone(),
            beta_method: c.sos.as_ref().map(|s| s.method),
            structurally_degenerate: c.sos.as_ref().map(|s| s.structurally_degenerate),
            soundness: c.sos.as_ref().map(|s| s.soundness.clone()),
            grams,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::EquilibriumTarget;
    use crate::fixtures;
    use crate::sysmodel::SwitchedAffineSystem;
    use proptest::prelude::*;

    fn law_from_fixture(f: &fixtures::Fixture) -> SwitchingLaw {
        let rf = f.reference.clone().unwrap();
        SwitchingLaw::from_blocks(&f.system, &f.lambda, &f.target, rf.p_bar, rf.p_perp).unwrap()
    }

    fn example1_law() -> SwitchingLaw {
        law_from_fixture(&fixtures::example1())
    }

    fn example2_law() -> SwitchingLaw {
        law_from_fixture(&fixtures::example2())
    }

    /// Example 1 with every mode matrix replaced by `diag(0, −1)`.
    fn index_independent_law() -> SwitchingLaw {
        let a = DMatrix::from_row_slice(2, 2, &[0., 0., 0., -1.]);
        let sys = SwitchedAffineSystem::new(
            vec![a.clone(), a.clone(), a],
            vec![
                DVector::from_vec(vec![-1.0, 0.0]),
                DVector::from_vec(vec![1.0, 0.0]),
                DVector::zeros(2),
            ],
        )
        .unwrap();
        SwitchingLaw::from_blocks(
            &sys,
            &SimplexVector::uniform(3),
            &EquilibriumTarget::Perp(DVector::zeros(1)),
            DMatrix::from_element(1, 1, 1.5),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn third() -> SimplexVector {
        SimplexVector::uniform(3)
    }

    #[test]
    fn gamma_direct_evaluation() {
        let g = gamma(&third(), 0.3, 0).unwrap();
        let expect = [1.0 / 3.0 + 0.3 * 2.0 / 3.0, 0.7 / 3.0, 0.7 / 3.0];
        for (a, b) in g.weights().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((g.weights()[0] - 0.533_333_333_333).abs() < 1e-9);
    }

    #[test]
    fn gamma_endpoints() {
        let l = SimplexVector::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(gamma(&l, 0.0, 1).unwrap().weights(), l.weights());
        assert_eq!(gamma(&l, 1.0, 2).unwrap().weights(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn gamma_rejects_out_of_domain() {
        assert!(matches!(
            gamma(&third(), -0.6, 0),
            Err(RateError::Domain { .. })
        ));
        assert!(matches!(
            gamma(&third(), 1.2, 0),
            Err(RateError::Domain { .. })
        ));
        assert!(gamma(&third(), -0.5, 0).is_ok());
    }

    #[test]
    fn epsilon_domain_of_uniform_weights() {
        assert!((epsilon_lower(&third(), 0) + 0.5).abs() < 1e-15);
        assert!((epsilon_max(&third()) - 0.5).abs() < 1e-15);
        assert_eq!(epsilon_max(&SimplexVector::vertex(3, 1)), 1.0);
    }

    #[test]
    fn active_sets() {
        assert_eq!(
            active_set(&SimplexVector::new(vec![0.5, 0.5, 0.0]).unwrap()),
            vec![0, 1]
        );
        assert_eq!(active_set(&SimplexVector::vertex(3, 2)), vec![2]);
        assert_eq!(
            active_set(&fixtures::motor_velocity_published_lambda()),
            vec![6, 7]
        );
    }

    #[test]
    fn rho_at_zero_is_the_decrease_margin() {
        let law = example2_law();
        let rho = find_rho(&law, 0.0).unwrap();
        let direct = -linalg::s_max(&law.certificate.decrease_block());
        assert!(rho > 0.0);
        assert!((rho - direct).abs() < 1e-15 * direct.abs().max(1.0));
    }

    #[test]
    fn rho_on_example1_grid_is_positive_and_continuous() {
        let law = example1_law();
        // He(S̄A_γV̄) = −3γ_3, smallest γ_3 = (1 − 2ε)/3 at γ(λ, −ε, 3)
        let grid: Vec<f64> = (0..40).map(|k| 0.5 * k as f64 / 40.0).collect();
        let rhos: Vec<f64> = grid.iter().map(|&e| find_rho(&law, e).unwrap()).collect();
        for (e, r) in grid.iter().zip(&rhos) {
            assert!(*r > 0.0);
            assert!((r - (1.0 - 2.0 * e)).abs() < 1e-12, "ρ({e}) = {r}");
        }
        for w in rhos.windows(2) {
            assert!((w[1] - w[0]).abs() < 0.03);
        }
        assert!(matches!(
            find_rho(&law, 0.5),
            Err(RateError::RhoNotPositive { .. })
        ));
    }

    #[test]
    fn rho_outside_domain_is_an_error() {
        let law = example2_law();
        assert!(matches!(find_rho(&law, 0.7), Err(RateError::Domain { .. })));
    }

    #[test]
    fn example1_g_and_h_at_unit_point() {
        let ev = GhEvaluator::new(&example1_law());
        let xi = DVector::from_vec(vec![1.0, 1.0]);
        assert!((ev.g(0, &xi) + 1.0).abs() < 1e-15);
        assert!((ev.h(0, &xi) - 0.5).abs() < 1e-15);
        let zero = DVector::zeros(2);
        for i in 0..3 {
            assert_eq!(ev.g(i, &zero), 0.0);
            assert_eq!(ev.h(i, &zero), 0.0);
        }
    }

    #[test]
    fn zero_residual_mode_has_zero_h() {
        let law = example1_law();
        assert_eq!(law.ell[2].norm(), 0.0);
        let ev = GhEvaluator::new(&law);
        assert_eq!(ev.h_poly(2).max_abs_coeff(), 0.0);
    }

    #[test]
    fn h_is_half_the_squared_linear_part() {
        let law = example2_law();
        let ev = GhEvaluator::new(&law);
        for i in 0..3 {
            let g = ev.g_poly(i);
            let mut lin = Poly::zero(3);
            for (e, c) in g.terms() {
                if e.iter().sum::<u32>() == 1 {
                    lin.add_term(e.clone(), *c);
                }
            }
            assert!(lin.mul(&lin).scale(0.5).max_abs_diff(&ev.h_poly(i)) < 1e-18);
        }
    }

    #[test]
    fn vertex_with_zero_residual_is_rank_deficient_and_unbounded() {
        let f = fixtures::example1();
        let law = SwitchingLaw::from_blocks(
            &f.system,
            &SimplexVector::vertex(3, 2),
            &f.target,
            DMatrix::from_element(1, 1, 1.5),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert_eq!(rank_ml(&law).unwrap(), (0, 1));
        assert!(matches!(
            certify_rate(&law, 1.0, &RateOptions::default()),
            Err(RateError::RankDeficient { rank: 0, m: 1 })
        ));
        // g ≡ 0 as well, so the upper identity never limits β
        assert!(matches!(
            sos_find_beta(&law, 1.0, &SosOptions::default()),
            Err(RateError::SosInfeasible(_))
        ));
    }

    #[test]
    fn example2_sos_certificate() {
        let law = example2_law();
        assert_eq!(rank_ml(&law).unwrap(), (1, 1));
        let r = level_from_radius(&law, 1.0);
        let res = sos_find_beta(&law, r, &SosOptions::default()).unwrap();
        assert!(res.beta > 0.0);
        assert_eq!(res.certificates.len(), 6);
        for c in &res.certificates {
            assert!(c.reconstruction_residual <= RECONSTRUCTION_TOL);
            assert!(c.min_eigenvalue >= -GRAM_PSD_TOL);
            assert!(c.multiplier_min_eigenvalue >= -GRAM_PSD_TOL);
            assert_eq!(c.basis.len(), 10);
            assert_eq!(c.multiplier_basis.len(), 4);
        }
        assert!(res.soundness.passed, "{:?}", res.soundness);
        assert!(res.structurally_degenerate);
    }

    #[test]
    fn beta_grows_as_the_level_shrinks() {
        let law = example2_law();
        let betas: Vec<f64> = [2.0, 1.0, 0.25]
            .iter()
            .map(|&rr| {
                sos_find_beta(&law, level_from_radius(&law, rr), &SosOptions::default())
                    .unwrap()
                    .beta
            })
            .collect();
        assert!(betas[0] < betas[1] && betas[1] < betas[2], "{betas:?}");
    }

    #[test]
    fn bisection_agrees_with_direct_solve() {
        let law = example2_law();
        let r = level_from_radius(&law, 0.5);
        let direct = sos_find_beta(&law, r, &SosOptions::default()).unwrap();
        let opts = SosOptions {
            force_bisection: true,
            ..SosOptions::default()
        };
        let bis = sos_find_beta(&law, r, &opts).unwrap();
        assert_eq!(bis.method, BetaMethod::Bisection);
        assert!(
            (bis.b - direct.b).abs() <= 1e-3 * direct.b,
            "{} vs {}",
            bis.b,
            direct.b
        );
    }

    #[test]
    fn example2_rate_is_positive() {
        let law = example2_law();
        let r = level_from_radius(&law, 1.0);
        let c = certify_rate(&law, r, &RateOptions::default()).unwrap();
        assert_eq!(c.status, RateStatus::Certified);
        assert!(c.alpha > 0.0);
        assert!((c.alpha - linalg::s_min(&c.q) / linalg::s_max(&law.certificate.p)).abs() < 1e-18);
        assert!(c.epsilon > 0.0 && c.epsilon <= 0.5);
        let doc = RateDocument::new(&c);
        assert_eq!(doc.grams.len(), 6);
        assert_eq!(doc.q_eigenvalues.len(), 3);
    }

    #[test]
    fn general_g_is_at_least_as_good() {
        let law = example2_law();
        let base = RateOptions {
            beta: Some(0.1),
            grid_points: 5,
            refine_points: 0,
            ..RateOptions::default()
        };
        let scalar = certify_rate(&law, 1.0, &base).unwrap();
        let general = certify_rate(
            &law,
            1.0,
            &RateOptions {
                general_g: true,
                ..base
            },
        )
        .unwrap();
        assert!(
            general.alpha >= scalar.alpha * (1.0 - 1e-6),
            "{} < {}",
            general.alpha,
            scalar.alpha
        );
    }

    #[test]
    fn weights_must_match_the_active_set() {
        let law = example2_law();
        let opts = RateOptions {
            beta: Some(0.1),
            weights: Some(vec![0.5, 0.5]),
            ..RateOptions::default()
        };
        assert!(matches!(
            certify_rate(&law, 1.0, &opts),
            Err(RateError::Dimension(_))
        ));
        let opts = RateOptions {
            weights: Some(vec![0.2, 0.3, 0.5]),
            ..opts
        };
        assert!(certify_rate(&law, 1.0, &opts).unwrap().alpha > 0.0);
    }

    #[test]
    fn curve_csv_header() {
        let pts = vec![CurvePoint {
            r: 1.0,
            beta: 2.0,
            epsilon: 0.5,
            alpha: 1e-3,
            error: None,
        }];
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &pts).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("r,beta,epsilon,alpha\n"));
        assert_eq!(s.lines().count(), 2);
    }

    fn random_matrices(seed: &[f64], k: usize) -> Vec<DMatrix<f64>> {
        (0..k)
            .map(|i| {
                DMatrix::from_fn(2, 3, |a, b| {
                    seed[(i * 6 + a * 3 + b) % seed.len()] * (1.0 + i as f64)
                })
            })
            .collect()
    }

    proptest! {
        #[test]
        fn gamma_is_affine(
            raw in proptest::collection::vec(0.01f64..1.0, 4),
            vals in proptest::collection::vec(-5.0f64..5.0, 24),
            i in 0usize..4,
            t in 0.0f64..1.0,
        ) {
            let s: f64 = raw.iter().sum();
            let lam = SimplexVector::new(raw.iter().map(|v| v / s).collect()).unwrap();
            let lo = epsilon_lower(&lam, i);
            let eps = lo + t * (1.0 - lo);
            let xs = random_matrices(&vals, 4);
            let g = gamma(&lam, eps, i).unwrap();
            let lhs = g.combine_matrices(&xs);
            let rhs = lam.combine_matrices(&xs) * (1.0 - eps) + &xs[i] * eps;
            prop_assert!(linalg::max_abs(&(lhs - rhs)) < 1e-12);
        }

        #[test]
        fn alpha_monotone_for_index_independent_matrices(
            e1 in 0.01f64..0.5, de in 0.0f64..0.5,
            b1 in 0.01f64..10.0, db in 0.0f64..10.0,
        ) {
            let law = index_independent_law();
            let opts = RateOptions::default();
            let e2 = (e1 + de).min(0.5);
            let (a11, _) = rate_at(&law, e1, b1, &opts).unwrap();
            let (a21, _) = rate_at(&law, e2, b1, &opts).unwrap();
            let (a12, _) = rate_at(&law, e1, b1 + db, &opts).unwrap();
            prop_assert!(a21 >= a11 - 1e-12 * a11.abs());
            prop_assert!(a12 >= a11 - 1e-12 * a11.abs());
        }

        #[test]
        fn g_matches_lyapunov_derivative_oracle(x in proptest::collection::vec(-2.0f64..2.0, 3), i in 0usize..3) {
            // 2ξ'P_x(A_iξ + ℓ_i) = ξ̄'He(S̄A_iV̄)ξ̄ + 2g_i when A_iV⊥ = 0
            let law = example2_law();
            let ev = GhEvaluator::new(&law);
            let xi = DVector::from_vec(x);
            let px = law.certificate.p_state();
            let full = 2.0 * xi.dot(&(&px * (law.system.a(i) * &xi + &law.ell[i])));
            let vb = &law.certificate.decomp.v_bar;
            let xb = vb.transpose() * &xi;
            let quad = xb.dot(&(linalg::he(&(&law.s_bar * law.system.a(i) * vb)) * &xb));
            let g = ev.g(i, &xi);
            prop_assert!((full - quad - 2.0 * g).abs() < 1e-12 * (1.0 + full.abs()));
        }
    }
}
