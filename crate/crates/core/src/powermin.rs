//! Power-minimization design of one group precoder.
//!
//! The dual of `min ‖x̃‖² s.t. A x̃ + t_g c1 - √I c2 ≤ 0` is, up to sign and
//! scale, `min_{μ̂ ≥ 0} h(μ̂) = μ̂ᵀVμ̂ + cᵀμ̂` with `c = 4(-t_g c1 + √I c2)`.
//! Majorizing `μ̂ᵀVμ̂` by its `λ_max`-curvature quadratic gives a separable
//! surrogate whose minimizer over the orthant is a clamp; the primal is
//! `x̃ = -Aᵀμ̂ / 2`.

use crate::linalg::{pinv_solve, real_to_complex};
use crate::maxmin::{select_rows, slack_holds, subvector, SolveDiagnostics, SolverConfig, Support, POLISH_INTERVAL};
use crate::transform::RealProblem;
use crate::verification::{kkt_residuals_powermin, min_norm_point_with_multipliers};
use crate::{CVector, Error, Result, RMatrix, RVector};

/// Relative tolerance of the a-posteriori feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerMinSolution {
    pub precoder: CVector,
    pub x_tilde: RVector,
    pub mu_hat: RVector,
    /// Dual value `-h(μ̂)/4`, a lower bound on the optimal power.
    pub dual_value: f64,
    pub diag: SolveDiagnostics,
}

impl PowerMinSolution {
    pub fn power(&self) -> f64 {
        self.x_tilde.norm_squared()
    }
}

/// `c = 4(-t_g c1 + √I c2)`.
pub fn build_c(t_g: f64, i_tol: f64, problem: &RealProblem) -> RVector {
    (&problem.c2 * i_tol.sqrt() - &problem.c1 * t_g) * 4.0
}

/// `h(μ̂) = μ̂ᵀVμ̂ + cᵀμ̂`.
pub fn pm_objective(v: &RMatrix, c: &RVector, mu_hat: &RVector) -> f64 {
    mu_hat.dot(&(v * mu_hat)) + c.dot(mu_hat)
}

/// One surrogate minimization: `max(0, -(2Vμ̂ - 2λμ̂ + c) / 2λ)`.
pub fn pm_mm_step(mu_hat: &RVector, v: &RMatrix, lambda_max: f64, c: &RVector) -> RVector {
    let mut q = (v * mu_hat - mu_hat * lambda_max) * 2.0;
    q += c;
    q.map(|x| (-x / (2.0 * lambda_max)).max(0.0))
}

/// Exact solution of the KKT system on the support of `mu_hat`: the
/// minimum-norm point of the active rows held with equality, with
/// multipliers from stationarity. Falls back to the minimum-norm point of
/// the inequality subsystem of nearly active rows. `None` unless the point
/// is feasible for every row, which makes it optimal.
fn polish(problem: &RealProblem, support: &Support, mu: &RVector, t_g: f64, i_tol: f64) -> Option<(RVector, RVector)> {
    if support.is_empty() {
        return None;
    }
    equality_polish(problem, support, t_g, i_tol).or_else(|| relaxed_polish(problem, mu, t_g, i_tol))
}

fn relaxed_polish(problem: &RealProblem, mu: &RVector, t_g: f64, i_tol: f64) -> Option<(RVector, RVector)> {
    let scale = t_g.max(1.0);
    let x = problem.a.transpose() * mu * -0.5;
    let values = problem.constraint_values(&x, t_g, i_tol);
    let mut keep: Vec<bool> = (0..mu.len()).map(|r| mu[r] > 0.0 || values[r] > -0.1 * scale).collect();
    // cutting planes: rows violated by the relaxed optimum join the subsystem
    loop {
        let idx: Vec<usize> = (0..mu.len()).filter(|&r| keep[r]).collect();
        let a_s = select_rows(&problem.a, &idx);
        let b_s = subvector(&problem.c2, &idx) * i_tol.sqrt() - subvector(&problem.c1, &idx) * t_g;
        let (x, w) = min_norm_point_with_multipliers(&a_s, &b_s).ok()?;
        let values = problem.constraint_values(&x, t_g, i_tol);
        let mut added = false;
        for r in 0..mu.len() {
            if !keep[r] && values[r] > 1e-9 * scale {
                keep[r] = true;
                added = true;
            }
        }
        if added {
            continue;
        }
        if values.max() > 1e-9 * scale {
            return None;
        }
        let mut full = RVector::zeros(mu.len());
        for (k, &r) in idx.iter().enumerate() {
            full[r] = 2.0 * w[k];
        }
        return Some((x, full));
    }
}

fn equality_polish(problem: &RealProblem, support: &Support, t_g: f64, i_tol: f64) -> Option<(RVector, RVector)> {
    let idx = &support.rows;
    let a_s = select_rows(&problem.a, idx);
    let b_s = subvector(&problem.c2, idx) * i_tol.sqrt() - subvector(&problem.c1, idx) * t_g;
    let x = pinv_solve(&a_s, &b_s);
    let scale = t_g.max(1.0);
    if (&a_s * &x - &b_s).amax() > 1e-9 * scale {
        return None;
    }
    let mu_s = pinv_solve(&a_s.transpose(), &(&x * -2.0));
    if (a_s.transpose() * &mu_s + &x * 2.0).norm() > 1e-9 * x.norm().max(1.0) {
        return None;
    }
    let mu = support.scatter(&mu_s, problem.rows())?;
    let g = problem.constraint_values(&x, t_g, i_tol);
    if g.max() > 1e-9 * scale || !slack_holds(&g, &mu, 1e-9 * scale) {
        return None;
    }
    Some((x, mu))
}

/// Solves the power-minimization design for one group symbol vector.
pub fn solve_powermin(problem: &RealProblem, t_g: f64, i_tol: f64, cfg: &SolverConfig) -> Result<PowerMinSolution> {
    cfg.validate()?;
    if !(t_g > 0.0) {
        return Err(Error::invalid("CI target must be positive"));
    }
    if !(i_tol >= 0.0) {
        return Err(Error::invalid("interference tolerance must be nonnegative"));
    }
    if !(problem.lambda_max > 0.0) {
        return Err(Error::invalid("constraint matrix is zero"));
    }
    let c = build_c(t_g, i_tol, problem);
    let mut mu = RVector::zeros(problem.rows());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut polished_point = None;
    let mut last_support: Option<Support> = None;
    for iteration in 1..=cfg.max_outer {
        let next = pm_mm_step(&mu, &problem.v, problem.lambda_max, &c);
        trace.push(pm_objective(&problem.v, &c, &next));
        let prev_norm = mu.norm();
        let change = (&next - &mu).norm();
        mu = next;
        // the first step starts from zero, so its change is tested absolutely
        let change = if prev_norm > 0.0 { change / prev_norm } else { change };
        let small_step = change <= cfg.eps3;
        if small_step || iteration % POLISH_INTERVAL == 0 {
            let support = Support::of(&mu, problem, i_tol);
            if last_support.as_ref() != Some(&support) {
                polished_point = polish(problem, &support, &mu, t_g, i_tol);
                last_support = Some(support);
            } else {
                // the nearly active set can change while the support does not
                polished_point = relaxed_polish(problem, &mu, t_g, i_tol);
            }
            if polished_point.is_some() {
                converged = true;
                break;
            }
        }
        converged = small_step;
    }
    let mut x_tilde = problem.a.transpose() * &mu * -0.5;
    let mut kkt = kkt_residuals_powermin(&x_tilde, &mu, problem, t_g, i_tol);
    let mut polished = false;
    if let Some((px, pmu)) = polished_point {
        let pkkt = kkt_residuals_powermin(&px, &pmu, problem, t_g, i_tol);
        if pkkt.normalized_max() <= kkt.normalized_max() {
            (x_tilde, mu, kkt, polished) = (px, pmu, pkkt, true);
        }
    }
    let violation = problem.constraint_values(&x_tilde, t_g, i_tol).max();
    let tol = FEASIBILITY_TOL * t_g.max(1.0);
    if violation > tol {
        return Err(Error::Infeasible(format!(
            "recovered precoder violates the constraints by {violation:.3e} after {} iterations{}",
            trace.len(),
            if converged { "" } else { " (iteration cap reached)" }
        )));
    }
    let dual_value = -pm_objective(&problem.v, &c, &mu) / 4.0;
    Ok(PowerMinSolution {
        precoder: real_to_complex(&x_tilde)?,
        x_tilde,
        mu_hat: mu,
        dual_value,
        diag: SolveDiagnostics {
            outer_iterations: trace.len(),
            inner_iterations_total: 0,
            objective_trace: trace,
            converged,
            polished,
            kkt,
        },
    })
}
