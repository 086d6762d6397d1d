//! Max-min CI-margin design of one group precoder by majorization-minimization
//! on the Lagrange dual.
//!
//! The dual of `max t s.t. A x̃ + t c1 - √I c2 ≤ 0, ‖x̃‖² ≤ P` is
//!
//! ```text
//! min_μ  f(μ) = √P √(μᵀVμ) + √I c2ᵀμ    s.t.  c1ᵀμ = 1, μ ≥ 0
//! ```
//!
//! Each outer step replaces `f` by the separable quadratic surrogate
//! `α‖μ‖² + qᵀμ + α‖μ_t‖²`, tangent at `μ_t`. Its minimizer splits into the
//! CI block `μ1`, a projection onto a scaled simplex found by root-finding on
//! the scalar multiplier, and the interference block `μ2`, a clamp.

use crate::linalg::{pinv_solve, real_to_complex};
use crate::transform::RealProblem;
use crate::verification::{check_majorization, kkt_residuals_maxmin, KktReport};
use crate::{CVector, Error, Result, RMatrix, RVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Tolerance on the scalar dual derivative of the `μ1` update.
    pub eps1: f64,
    /// Relative-change stopping threshold of the max-min outer loop.
    pub eps2: f64,
    /// Relative-change stopping threshold of the power-minimization loop.
    pub eps3: f64,
    pub max_outer: usize,
    pub max_inner: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-6,
            eps2: 1e-6,
            eps3: 1e-6,
            max_outer: 2000,
            max_inner: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0 && self.eps2 > 0.0 && self.eps3 > 0.0) {
            return Err(Error::invalid("solver thresholds must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::invalid("iteration caps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations_total: usize,
    /// Dual objective after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// Whether the returned point comes from the active-set refinement.
    pub polished: bool,
    pub kkt: KktReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxMinSolution {
    pub precoder: CVector,
    pub x_tilde: RVector,
    /// Smallest CI margin over the group's users at `precoder`.
    pub t: f64,
    pub mu: RVector,
    pub mu0: f64,
    pub diag: SolveDiagnostics,
}

/// `f(μ) = √P √(μᵀVμ) + √I c2ᵀμ`.
pub fn dual_objective(problem: &RealProblem, p_budget: f64, i_tol: f64, mu: &RVector) -> f64 {
    let quad = mu.dot(&(&problem.v * mu)).max(0.0);
    p_budget.sqrt() * quad.sqrt() + i_tol.sqrt() * problem.c2.dot(mu)
}

/// Surrogate coefficients `(α, q)` at `μ_t`.
pub fn mm_step(mu_t: &RVector, problem: &RealProblem, p_budget: f64, i_tol: f64) -> Result<(f64, RVector)> {
    let v_mu = &problem.v * mu_t;
    let quad = mu_t.dot(&v_mu);
    if !(quad > 0.0) {
        return Err(Error::Degenerate("μᵀVμ vanished at the current iterate".into()));
    }
    let root = quad.sqrt();
    let sqrt_p = p_budget.sqrt();
    let alpha = sqrt_p * problem.lambda_max / (2.0 * root);
    let mut q = (v_mu - mu_t * problem.lambda_max) * (sqrt_p / root);
    q.axpy(i_tol.sqrt(), &problem.c2, 1.0);
    Ok((alpha, q))
}

fn clamp_mu1(q1: &[f64], alpha: f64, tan: f64, lambda: f64) -> impl Iterator<Item = f64> + '_ {
    q1.iter().map(move |&q| (-(lambda * tan + q) / (2.0 * alpha)).max(0.0))
}

/// Minimizer of `α‖μ1‖² + q1ᵀμ1` over `tanθ 1ᵀμ1 = 1, μ1 ≥ 0`, and the number
/// of root-finding iterations spent on the scalar multiplier.
pub fn solve_mu1(q1: &[f64], alpha: f64, tan: f64, cfg: &SolverConfig) -> (RVector, usize) {
    assert!(alpha > 0.0 && tan > 0.0 && !q1.is_empty());
    let n = q1.len();
    // g'(λ) = tanθ Σ μ1_i(λ) - 1 is continuous, non-increasing and piecewise
    // linear with breakpoints at -q1_i / tanθ
    let dg = |lambda: f64| tan * clamp_mu1(q1, alpha, tan, lambda).sum::<f64>() - 1.0;
    let breaks = q1.iter().map(|&q| -q / tan);
    let max_b = breaks.clone().fold(f64::NEG_INFINITY, f64::max);
    let min_b = breaks.fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (min_b - 2.0 * alpha / (n as f64 * tan * tan), max_b);
    let (mut f_lo, mut f_hi) = (dg(lo), dg(hi));
    let mut lambda = lo;
    let mut iterations = 0;
    if f_lo.abs() > cfg.eps1 {
        let mut side = 0i8;
        loop {
            iterations += 1;
            let secant = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            lambda = if secant > lo && secant < hi { secant } else { 0.5 * (lo + hi) };
            let f = dg(lambda);
            if f.abs() <= cfg.eps1 || iterations >= cfg.max_inner || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                break;
            }
            if f > 0.0 {
                lo = lambda;
                f_lo = f;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = lambda;
                f_hi = f;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
        }
    }
    // exact root of the linear piece selected by the active set at λ
    let active: Vec<usize> = (0..n).filter(|&i| -q1[i] / tan > lambda).collect();
    if !active.is_empty() {
        let sum_q: f64 = active.iter().map(|&i| q1[i]).sum();
        let polished = -(sum_q + 2.0 * alpha / tan) / (active.len() as f64 * tan);
        let same_set = (0..n).all(|i| (-q1[i] / tan > polished) == active.contains(&i));
        if same_set {
            lambda = polished;
        }
    }
    (RVector::from_iterator(n, clamp_mu1(q1, alpha, tan, lambda)), iterations)
}

/// `max(0, -q2 / (2α))` entrywise.
pub fn solve_mu2(q2: &[f64], alpha: f64) -> RVector {
    RVector::from_iterator(q2.len(), q2.iter().map(|&q| (-q / (2.0 * alpha)).max(0.0)))
}

/// `μ0 = √(μᵀVμ / 4P)` and `x̃ = -Aᵀμ / (2 μ0)`.
pub fn recover_primal(mu: &RVector, problem: &RealProblem, p_budget: f64) -> Result<(f64, RVector)> {
    let at_mu = problem.a.transpose() * mu;
    let quad = at_mu.norm_squared();
    if !(quad > 0.0) {
        return Err(Error::Degenerate("Aᵀμ vanished; the power multiplier is undefined".into()));
    }
    let mu0 = (quad / (4.0 * p_budget)).sqrt();
    Ok((mu0, at_mu * (-0.5 / mu0)))
}

/// Smallest CI margin over the group's users, read off the CI rows:
/// each pair of rows gives `margin_k = -max(row+, row-) / tanθ`.
pub fn group_margin(problem: &RealProblem, x_tilde: &RVector) -> f64 {
    let kg = problem.group_users;
    let ax = problem.a.rows(0, 2 * kg) * x_tilde;
    (0..kg)
        .map(|k| -ax[k].max(ax[kg + k]) / problem.tan_theta)
        .fold(f64::INFINITY, f64::min)
}

/// Outer iterations between attempts to certify the iterate by polishing.
pub(crate) const POLISH_INTERVAL: usize = 25;

/// Rows of `a` listed in `idx`.
pub(crate) fn select_rows(a: &RMatrix, idx: &[usize]) -> RMatrix {
    RMatrix::from_fn(idx.len(), a.ncols(), |i, j| a[(idx[i], j)])
}

pub(crate) fn subvector(v: &RVector, idx: &[usize]) -> RVector {
    RVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

/// Support of a dual iterate. An interference row and its mirror (the same
/// row with opposite sign) both active means the two describe one equality;
/// only the first is kept and its multiplier may take either sign.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Support {
    pub rows: Vec<usize>,
    mirrors: Vec<Option<usize>>,
}

impl Support {
    pub fn of(mu: &RVector, problem: &RealProblem, i_tol: f64) -> Self {
        let ci = problem.ci_rows();
        let kc = (problem.rows() - ci) / 4;
        let mirror = |r: usize| -> Option<usize> {
            if r < ci {
                return None;
            }
            let off = r - ci;
            Some(ci + ((off / kc) ^ 1) * kc + off % kc)
        };
        let mut rows = Vec::new();
        let mut mirrors = Vec::new();
        for r in 0..mu.len() {
            if !(mu[r] > 0.0) {
                continue;
            }
            match mirror(r) {
                // with a positive tolerance a row and its mirror cannot both
                // be active; the larger multiplier marks the active one
                Some(m) if i_tol > 0.0 && mu[m] > 0.0 => {
                    if mu[r] > mu[m] || (mu[r] == mu[m] && r < m) {
                        rows.push(r);
                        mirrors.push(None);
                    }
                }
                Some(m) if m < r && mu[m] > 0.0 => continue,
                Some(m) if m > r && mu[m] > 0.0 => {
                    rows.push(r);
                    mirrors.push(Some(m));
                }
                _ => {
                    rows.push(r);
                    mirrors.push(None);
                }
            }
        }
        Self { rows, mirrors }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Full-length multiplier vector from values on the kept rows, or `None`
    /// if a sign-constrained value is negative beyond round-off.
    pub fn scatter(&self, values: &RVector, len: usize) -> Option<RVector> {
        let tol = 1e-9 * values.amax();
        let mut full = RVector::zeros(len);
        for (k, (&r, m)) in self.rows.iter().zip(&self.mirrors).enumerate() {
            let v = values[k];
            match (v >= 0.0, m) {
                (true, _) => full[r] = v,
                (false, Some(m)) => full[*m] = -v,
                (false, None) if v >= -tol => {}
                (false, None) => return None,
            }
        }
        Some(full)
    }
}

/// Every row carrying a multiplier is active within `tol`.
pub(crate) fn slack_holds(g: &RVector, mu: &RVector, tol: f64) -> bool {
    g.iter().zip(mu.iter()).all(|(&g, &m)| m == 0.0 || g.abs() <= tol)
}

/// Candidate primal-dual point `(x̃, μ, μ0)`.
type MaxMinPoint = (RVector, RVector, f64);

/// Exact solution of the KKT system on the support of `mu`: the active rows
/// hold with equality, the power constraint binds, and `x̃` lies in the span
/// of the active rows. Returns `None` unless the resulting point is primal
/// and dual feasible.
fn polish(problem: &RealProblem, support: &Support, p_budget: f64, i_tol: f64) -> Option<MaxMinPoint> {
    if support.is_empty() {
        return None;
    }
    let idx = &support.rows;
    let a_s = select_rows(&problem.a, idx);
    let c1_s = subvector(&problem.c1, idx);
    let b_s = subvector(&problem.c2, idx) * i_tol.sqrt();
    // x(t) = u - t w solves A_S x = b_S - t c1_S with minimum norm
    let u = pinv_solve(&a_s, &b_s);
    let w = pinv_solve(&a_s, &c1_s);
    let scale = p_budget.sqrt().max(1.0);
    if (&a_s * &u - &b_s).amax() > 1e-9 * scale || (&a_s * &w - &c1_s).amax() > 1e-9 * scale {
        return None;
    }
    let (ww, uw, uu) = (w.norm_squared(), u.dot(&w), u.norm_squared());
    let disc = uw * uw - ww * (uu - p_budget);
    if !(ww > 0.0) || disc < 0.0 {
        return None;
    }
    let t = (uw + disc.sqrt()) / ww;
    let x = &u - &w * t;
    let nu = pinv_solve(&a_s.transpose(), &(-&x));
    if (a_s.transpose() * &nu + &x).norm() > 1e-9 * x.norm().max(1.0) {
        return None;
    }
    let denom = c1_s.dot(&nu);
    if !(denom > 0.0) {
        return None;
    }
    let mu0 = 0.5 / denom;
    let mu = support.scatter(&(nu * (2.0 * mu0)), problem.rows())?;
    let g = problem.constraint_values(&x, t, i_tol);
    if g.max() > 1e-9 * scale || !slack_holds(&g, &mu, 1e-9 * scale) {
        return None;
    }
    Some((x, mu, mu0))
}

/// Solves the max-min design for one group symbol vector.
pub fn solve_maxmin(problem: &RealProblem, p_budget: f64, i_tol: f64, cfg: &SolverConfig) -> Result<MaxMinSolution> {
    cfg.validate()?;
    if !(p_budget > 0.0) {
        return Err(Error::invalid("power budget must be positive"));
    }
    if !(i_tol >= 0.0) {
        return Err(Error::invalid("interference tolerance must be nonnegative"));
    }
    let rows = problem.rows();
    let ci = problem.ci_rows();
    let l1: f64 = problem.c1.iter().map(|c| c.abs()).sum();
    let mut mu = RVector::from_fn(rows, |i, _| if i < ci { problem.c1[i] / l1 } else { 0.0 });
    let mut trace = Vec::new();
    let mut inner_total = 0;
    let mut converged = false;
    let mut polished_point = None;
    let mut last_support: Option<Support> = None;
    for iteration in 1..=cfg.max_outer {
        let (alpha, q) = mm_step(&mu, problem, p_budget, i_tol)?;
        let (mu1, inner) = solve_mu1(&q.as_slice()[..ci], alpha, problem.tan_theta, cfg);
        inner_total += inner;
        let mu2 = solve_mu2(&q.as_slice()[ci..], alpha);
        let next = RVector::from_iterator(rows, mu1.iter().chain(mu2.iter()).copied());
        if cfg!(debug_assertions) && iteration % 10 == 0 {
            let check = check_majorization(&problem.v, problem.lambda_max, p_budget, i_tol, &problem.c2, &next, &mu);
            debug_assert!(check.holds, "surrogate fails to majorize: {check:?}");
        }
        trace.push(dual_objective(problem, p_budget, i_tol, &next));
        let prev_norm = mu.norm();
        let change = (&next - &mu).norm();
        mu = next;
        let change = if prev_norm > f64::MIN_POSITIVE { change / prev_norm } else { change };
        let small_step = change <= cfg.eps2;
        if small_step || iteration % POLISH_INTERVAL == 0 {
            // success of the polish certifies optimality of its point
            let support = Support::of(&mu, problem, i_tol);
            if last_support.as_ref() != Some(&support) {
                polished_point = polish(problem, &support, p_budget, i_tol);
                last_support = Some(support);
            }
            if polished_point.is_some() {
                converged = true;
                break;
            }
        }
        converged = small_step;
    }
    let (mut mu0, mut x_tilde) = recover_primal(&mu, problem, p_budget)?;
    let mut t = group_margin(problem, &x_tilde);
    let mut kkt = kkt_residuals_maxmin(&x_tilde, t, &mu, mu0, problem, p_budget, i_tol);
    let mut polished = false;
    if let Some((px, pmu, pmu0)) = polished_point {
        let pt = group_margin(problem, &px);
        let pkkt = kkt_residuals_maxmin(&px, pt, &pmu, pmu0, problem, p_budget, i_tol);
        if pkkt.normalized_max() <= kkt.normalized_max() {
            (x_tilde, t, mu, mu0, kkt, polished) = (px, pt, pmu, pmu0, pkkt, true);
        }
    }
    Ok(MaxMinSolution {
        precoder: real_to_complex(&x_tilde)?,
        x_tilde,
        t,
        mu,
        mu0,
        diag: SolveDiagnostics {
            outer_iterations: trace.len(),
            inner_iterations_total: inner_total,
            objective_trace: trace,
            converged,
            polished,
            kkt,
        },
    })
}
