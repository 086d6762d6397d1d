//! Correctness instruments: KKT residuals, the majorization check, and
//! reference solvers for small instances.
//!
//! The reference solvers share no code with the MM solvers. Both reduce to
//! least-distance programming, `min ‖x‖ s.t. A x ≤ b`, which is solved
//! exactly by the classical reduction to nonnegative least squares and the
//! Lawson-Hanson active-set method.

use crate::transform::RealProblem;
use crate::{Error, Result, RMatrix, RVector};

/// Raw KKT residuals together with the scale used to normalize them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_feasibility: f64,
    pub dual_feasibility: f64,
    pub complementary_slackness: f64,
    pub scale: f64,
}

impl KktReport {
    pub fn max_raw(&self) -> f64 {
        self.stationarity
            .max(self.primal_feasibility)
            .max(self.dual_feasibility)
            .max(self.complementary_slackness)
    }

    /// Largest residual divided by the problem scale.
    pub fn normalized_max(&self) -> f64 {
        self.max_raw() / self.scale
    }
}

fn negative_part(v: &RVector) -> f64 {
    v.iter().fold(0.0, |m, &x| m.max(-x))
}

/// KKT residuals of the max-min problem at `(x̃, t, μ, μ0)`. Normalized by
/// `max(1, √P)`.
pub fn kkt_residuals_maxmin(
    x_tilde: &RVector,
    t: f64,
    mu: &RVector,
    mu0: f64,
    problem: &RealProblem,
    p_budget: f64,
    i_tol: f64,
) -> KktReport {
    let g = problem.constraint_values(x_tilde, t, i_tol);
    let power_gap = x_tilde.norm_squared() - p_budget;
    let stationarity_x = (problem.a.transpose() * mu + x_tilde * (2.0 * mu0)).norm();
    let stationarity_t = (problem.c1.dot(mu) - 1.0).abs();
    let slack = g.iter().zip(mu.iter()).fold(0.0, |m: f64, (g, u)| m.max((g * u).abs()));
    KktReport {
        stationarity: stationarity_x.max(stationarity_t),
        primal_feasibility: g.max().max(0.0).max(power_gap.abs()),
        dual_feasibility: negative_part(mu).max(-mu0).max(0.0),
        complementary_slackness: slack.max((mu0 * power_gap).abs()),
        scale: p_budget.sqrt().max(1.0),
    }
}

/// KKT residuals of the power-minimization problem at `(x̃, μ̂)`. Normalized
/// by `max(1, t_g)`.
pub fn kkt_residuals_powermin(
    x_tilde: &RVector,
    mu_hat: &RVector,
    problem: &RealProblem,
    t_g: f64,
    i_tol: f64,
) -> KktReport {
    let g = problem.constraint_values(x_tilde, t_g, i_tol);
    let slack = g.iter().zip(mu_hat.iter()).fold(0.0, |m: f64, (g, u)| m.max((g * u).abs()));
    KktReport {
        stationarity: (x_tilde * 2.0 + problem.a.transpose() * mu_hat).norm(),
        primal_feasibility: g.max().max(0.0),
        dual_feasibility: negative_part(mu_hat),
        complementary_slackness: slack,
        scale: t_g.max(1.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MajorizationCheck {
    pub holds: bool,
    /// `surrogate(μ | μ_t) - f(μ)`.
    pub gap: f64,
    /// `surrogate(μ_t | μ_t) - f(μ_t)`.
    pub tangency_gap: f64,
}

/// Checks that the max-min surrogate built at `mu_t` upper-bounds the dual
/// objective at `mu` and touches it at `mu_t`. Evaluated from the
/// definitions, independently of the solver's step routine.
pub fn check_majorization(
    v: &RMatrix,
    lambda_max: f64,
    p_budget: f64,
    i_tol: f64,
    c2: &RVector,
    mu: &RVector,
    mu_t: &RVector,
) -> MajorizationCheck {
    let (sp, si) = (p_budget.sqrt(), i_tol.sqrt());
    let f = |m: &RVector| sp * m.dot(&(v * m)).max(0.0).sqrt() + si * c2.dot(m);
    let vt = v * mu_t;
    let root = mu_t.dot(&vt).sqrt();
    let surrogate = |m: &RVector| {
        let alpha = sp * lambda_max / (2.0 * root);
        let q_dot = sp * (vt.dot(m) - lambda_max * mu_t.dot(m)) / root + si * c2.dot(m);
        alpha * m.norm_squared() + q_dot + alpha * mu_t.norm_squared()
    };
    let gap = surrogate(mu) - f(mu);
    let tangency_gap = surrogate(mu_t) - f(mu_t);
    let tol = 1e-9;
    MajorizationCheck {
        holds: gap >= -tol && tangency_gap.abs() <= tol,
        gap,
        tangency_gap,
    }
}

/// Lawson-Hanson active-set solution of `min ‖E u - f‖ s.t. u ≥ 0`.
pub fn nnls(e: &RMatrix, f: &RVector) -> Result<RVector> {
    let (rows, cols) = e.shape();
    let mut u = RVector::zeros(cols);
    let mut passive = vec![false; cols];
    let scale = e.amax().max(f.amax()).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale * scale * (rows.max(cols) as f64);
    let solve_passive = |passive: &[bool]| -> Result<RVector> {
        let idx: Vec<usize> = (0..cols).filter(|&j| passive[j]).collect();
        let sub = RMatrix::from_fn(rows, idx.len(), |i, k| e[(i, idx[k])]);
        let z = sub
            .svd(true, true)
            .solve(f, 1e-14 * scale)
            .map_err(|m| Error::OracleInconclusive(format!("least-squares subproblem failed: {m}")))?;
        let mut full = RVector::zeros(cols);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = z[k];
        }
        Ok(full)
    };
    // columns whose entry came out nonpositive right after being added; they
    // are skipped until another column enters, which prevents cycling
    let mut rejected = vec![false; cols];
    for _ in 0..(10 * cols + 100) {
        let w = e.transpose() * (f - e * &u);
        let candidate = (0..cols)
            .filter(|&j| !passive[j] && !rejected[j])
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)));
        let Some(j) = candidate.filter(|&j| w[j] > tol) else {
            return Ok(u);
        };
        passive[j] = true;
        let first = solve_passive(&passive)?;
        if first[j] <= 0.0 {
            passive[j] = false;
            rejected[j] = true;
            continue;
        }
        rejected.iter_mut().for_each(|r| *r = false);
        let mut z = first;
        loop {
            let blocking: Vec<usize> = (0..cols).filter(|&k| passive[k] && z[k] <= 0.0).collect();
            if blocking.is_empty() {
                u = z;
                break;
            }
            let step = blocking
                .iter()
                .map(|&k| u[k] / (u[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            u += (&z - &u) * step;
            for k in 0..cols {
                if passive[k] && u[k] <= 1e-15 * scale {
                    passive[k] = false;
                    u[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
            z = solve_passive(&passive)?;
        }
    }
    Err(Error::OracleInconclusive("nonnegative least squares did not terminate".into()))
}

/// Least-distance programming: the minimum-norm `x` with `A x ≤ b`.
pub fn min_norm_point(a: &RMatrix, b: &RVector) -> Result<RVector> {
    min_norm_point_with_multipliers(a, b).map(|(x, _)| x)
}

/// Minimum-norm point together with multipliers `w ≥ 0` satisfying `x = -Aᵀw`.
pub fn min_norm_point_with_multipliers(a: &RMatrix, b: &RVector) -> Result<(RVector, RVector)> {
    let (m, n) = a.shape();
    // min ‖x‖ s.t. G x ≥ h with G = -A, h = -b, via E = [Gᵀ; hᵀ], f = e_{n+1}
    let e = RMatrix::from_fn(n + 1, m, |i, j| if i < n { -a[(j, i)] } else { -b[j] });
    let mut f = RVector::zeros(n + 1);
    f[n] = 1.0;
    let u = nnls(&e, &f)?;
    let r = &e * &u - &f;
    if r[n].abs() <= 1e-12 {
        return Err(Error::Infeasible("linear constraints have no common point".into()));
    }
    let x = RVector::from_fn(n, |j, _| -r[j] / r[n]);
    Ok((x, u / r[n].abs()))
}

/// Reference solution of the power-minimization problem.
pub fn oracle_powermin(problem: &RealProblem, t_g: f64, i_tol: f64) -> Result<RVector> {
    let b = &problem.c2 * i_tol.sqrt() - &problem.c1 * t_g;
    let x = min_norm_point(&problem.a, &b)?;
    let violation = problem.constraint_values(&x, t_g, i_tol).max();
    if violation > 1e-8 * t_g.max(1.0) {
        return Err(Error::OracleInconclusive(format!("residual violation {violation:.3e}")));
    }
    Ok(x)
}

/// Whether CI level `t` is reachable within power `p_budget`.
pub fn maxmin_feasible(problem: &RealProblem, p_budget: f64, i_tol: f64, t: f64) -> Result<Option<RVector>> {
    let b = &problem.c2 * i_tol.sqrt() - &problem.c1 * t;
    match min_norm_point(&problem.a, &b) {
        Ok(x) if x.norm_squared() <= p_budget => Ok(Some(x)),
        Ok(_) | Err(Error::Infeasible(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reference solution of the max-min problem by bisection on `t`: returns
/// the largest feasible level and a witness precoder.
pub fn oracle_maxmin(problem: &RealProblem, p_budget: f64, i_tol: f64) -> Result<(RVector, f64)> {
    let kg = problem.group_users;
    // every CI row has norm ‖h_k‖ / cos θ, and the margin never exceeds √P ‖h_k‖
    let cos = 1.0 / (1.0 + problem.tan_theta * problem.tan_theta).sqrt();
    let min_h = (0..kg)
        .map(|k| problem.a.row(k).norm() * cos)
        .fold(f64::INFINITY, f64::min);
    let mut lo = 0.0;
    let mut witness = maxmin_feasible(problem, p_budget, i_tol, 0.0)?
        .ok_or_else(|| Error::OracleInconclusive("zero CI level is infeasible".into()))?;
    let mut hi = p_budget.sqrt() * min_h * (1.0 + 1e-12);
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        match maxmin_feasible(problem, p_budget, i_tol, mid)? {
            Some(x) => {
                lo = mid;
                witness = x;
            }
            None => hi = mid,
        }
    }
    Ok((witness, lo))
}
