//! Block-level precoding baselines and the per-group budgets derived from
//! them.
//!
//! Both baselines are solved in the dual uplink: normalized MMSE receive
//! filters are alternated with an uplink power update, and the final
//! downlink powers come from the `K x K` coupling system of the fixed
//! beamformers.

use num_complex::Complex64;

use crate::constellation::{symbol_vector, symbol_vector_count, Constellation};
use crate::grouping::{select_columns, Grouping};
use crate::{CMatrix, CVector, Error, Result, RMatrix, RVector};

const MAX_ITERATIONS: usize = 500;
const SPREAD_TOL: f64 = 1e-8;
const DIVERGENCE_MW: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlpMode {
    Balancing,
    PowerMin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlpSolution {
    pub mode: BlpMode,
    /// `N_t x K`, column `k` serves user `k`.
    pub w: CMatrix,
    /// Common SINR: the balanced value or the power-minimization target.
    pub sinr: f64,
    pub total_power: f64,
    pub iterations: usize,
    /// Relative SINR spread (balancing) or largest relative SINR error
    /// (power minimization) of the uplink iterate, per iteration.
    pub spread_trace: Vec<f64>,
}

/// Downlink SINR of every user under precoder `w`.
pub fn downlink_sinr(h: &CMatrix, w: &CMatrix, sigma2: f64) -> Vec<f64> {
    let g = h.adjoint() * w;
    (0..h.ncols())
        .map(|k| {
            let signal = g[(k, k)].norm_sqr();
            let interference: f64 = (0..w.ncols()).filter(|&j| j != k).map(|j| g[(k, j)].norm_sqr()).sum();
            signal / (interference + sigma2)
        })
        .collect()
}

/// Unit-norm MMSE receive filters for uplink powers `q`.
fn mmse_filters(h: &CMatrix, q: &[f64], sigma2: f64) -> Result<CMatrix> {
    let n = h.nrows();
    let mut cov = CMatrix::identity(n, n) * Complex64::new(sigma2, 0.0);
    for (k, &qk) in q.iter().enumerate() {
        let col = h.column(k);
        cov += (&col * col.adjoint()) * Complex64::new(qk, 0.0);
    }
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("uplink covariance is not positive definite".into()))?;
    let mut u = chol.solve(h);
    for mut c in u.column_iter_mut() {
        let norm = c.norm();
        c /= Complex64::new(norm, 0.0);
    }
    Ok(u)
}

/// Gains `|u_j^H h_k|^2`, indexed `[k][j]`: power from beam `j` at user `k`.
fn coupling(h: &CMatrix, u: &CMatrix) -> RMatrix {
    let g = h.adjoint() * u;
    RMatrix::from_fn(h.ncols(), u.ncols(), |k, j| g[(k, j)].norm_sqr())
}

/// Uplink SINR with unit-norm filters: the filter of user `k` sees user
/// `j`'s power through `gain[(j, k)]`.
fn uplink_sinr(gain: &RMatrix, q: &[f64], sigma2: f64) -> Vec<f64> {
    (0..q.len())
        .map(|k| {
            let interference: f64 = (0..q.len()).filter(|&j| j != k).map(|j| q[j] * gain[(j, k)]).sum();
            q[k] * gain[(k, k)] / (interference + sigma2)
        })
        .collect()
}

fn relative_spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

/// Downlink powers achieving SINR `gamma` for every user with the fixed
/// unit-norm beams, from `(D/γ - Ψ) p = σ² 1`. `None` when `gamma` is not
/// achievable with these beams.
fn downlink_powers(gain: &RMatrix, gamma: f64, sigma2: f64) -> Option<RVector> {
    let k = gain.nrows();
    let m = RMatrix::from_fn(k, k, |i, j| if i == j { gain[(i, i)] / gamma } else { -gain[(i, j)] });
    let p = m.lu().solve(&RVector::from_element(k, sigma2))?;
    (p.iter().all(|&x| x.is_finite() && x > 0.0)).then_some(p)
}

fn assemble(u: &CMatrix, p: &RVector) -> CMatrix {
    let mut w = u.clone();
    for (k, mut c) in w.column_iter_mut().enumerate() {
        c *= Complex64::new(p[k].sqrt(), 0.0);
    }
    w
}

/// SINR-balancing precoder under total power `p0`.
pub fn sinr_balancing_blp(h: &CMatrix, p0: f64, sigma2: f64) -> Result<BlpSolution> {
    if !(p0 > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::invalid("power and noise must be positive"));
    }
    let k = h.ncols();
    let mut q = vec![p0 / k as f64; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut u = mmse_filters(h, &q, sigma2)?;
    let mut gain = coupling(h, &u);
    for _ in 0..MAX_ITERATIONS {
        // normalized fixed point: q_k ∝ (interference + noise) / gain
        let sinr = uplink_sinr(&gain, &q, sigma2);
        let need: Vec<f64> = (0..k).map(|i| q[i] / sinr[i]).collect();
        let total: f64 = need.iter().sum();
        q = need.iter().map(|v| p0 * v / total).collect();
        u = mmse_filters(h, &q, sigma2)?;
        gain = coupling(h, &u);
        let spread = relative_spread(&uplink_sinr(&gain, &q, sigma2));
        trace.push(spread);
        if spread <= SPREAD_TOL {
            converged = true;
            break;
        }
    }

    let (gamma, p) = balance_downlink(&gain, p0, sigma2)?;
    let w = assemble(&u, &p);
    let sol = BlpSolution {
        mode: BlpMode::Balancing,
        total_power: p.sum(),
        w,
        sinr: gamma,
        iterations: trace.len(),
        spread_trace: trace,
    };
    if !converged {
        return Err(Error::BlpNotConverged {
            spread: *sol.spread_trace.last().unwrap_or(&f64::NAN),
            iterations: sol.iterations,
            last: Box::new(sol),
        });
    }
    Ok(sol)
}

/// Largest common SINR reachable by the fixed beams with total power `p0`.
fn balance_downlink(gain: &RMatrix, p0: f64, sigma2: f64) -> Result<(f64, RVector)> {
    let power = |g: f64| downlink_powers(gain, g, sigma2).map(|p| p.sum()).filter(|&s| s <= p0);
    // power(γ) is increasing on its feasible range; bracket the crossing
    let mut lo = 0.0;
    let mut hi = 1.0;
    while power(hi).is_some() {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Numerical("balanced SINR is unbounded".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if power(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == 0.0 {
        return Err(Error::Numerical("no positive SINR is reachable".into()));
    }
    let mut p = downlink_powers(gain, lo, sigma2)
        .ok_or_else(|| Error::Numerical("balanced downlink powers are infeasible".into()))?;
    // absorb the last bisection ulp so the budget is met exactly
    let scale = p0 / p.sum();
    p *= scale;
    Ok((lo, p))
}

/// Minimum-power precoder meeting SINR `gamma0` at every user.
pub fn powermin_blp(h: &CMatrix, gamma0: f64, sigma2: f64) -> Result<BlpSolution> {
    if !(gamma0 > 0.0) || !(sigma2 > 0.0) {
        return Err(Error::invalid("SINR target and noise must be positive"));
    }
    let k = h.ncols();
    let mut q = vec![0.0; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut gain = RMatrix::zeros(k, k);
    let mut u = CMatrix::zeros(h.nrows(), k);
    for _ in 0..MAX_ITERATIONS {
        u = mmse_filters(h, &q, sigma2)?;
        gain = coupling(h, &u);
        let sinr = uplink_sinr(&gain, &q, sigma2);
        // standard interference function with the MMSE filters
        let next: Vec<f64> = (0..k)
            .map(|i| {
                let interference: f64 = (0..k).filter(|&j| j != i).map(|j| q[j] * gain[(j, i)]).sum();
                gamma0 * (interference + sigma2) / gain[(i, i)]
            })
            .collect();
        let err = if q.iter().all(|&x| x > 0.0) {
            sinr.iter().map(|s| (s - gamma0).abs() / gamma0).fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        trace.push(err);
        if err <= SPREAD_TOL {
            converged = true;
            break;
        }
        if next.iter().sum::<f64>() > DIVERGENCE_MW || next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Infeasible(format!("SINR target {gamma0} drives the power above 1e12 mW")));
        }
        q = next;
    }
    if !converged {
        return Err(Error::Infeasible(format!(
            "power control did not reach SINR target {gamma0} in {MAX_ITERATIONS} iterations"
        )));
    }
    let p = downlink_powers(&gain, gamma0, sigma2)
        .ok_or_else(|| Error::Infeasible(format!("SINR target {gamma0} is not reachable")))?;
    Ok(BlpSolution {
        mode: BlpMode::PowerMin,
        total_power: p.sum(),
        w: assemble(&u, &p),
        sinr: gamma0,
        iterations: trace.len(),
        spread_trace: trace,
    })
}

/// Power budget and interference tolerance of one group symbol vector:
/// `‖W_g s‖²` and the mean of `|h_k^H W_g s|²` over out-of-group users `k`.
pub fn group_budget(w_g: &CMatrix, h_out: &CMatrix, s: &CVector) -> (f64, f64) {
    let x = w_g * s;
    let p = x.norm_squared();
    if h_out.ncols() == 0 {
        return (p, 0.0);
    }
    let leak = (h_out.adjoint() * &x).norm_squared() / h_out.ncols() as f64;
    (p, leak)
}

/// Per-group budgets of one channel realization.
///
/// Tables are enumerated only when a group's symbol-vector count is within
/// the cap; otherwise [`BudgetSet::budget`] evaluates entries on demand with
/// the same definitional function.
#[derive(Debug, Clone)]
pub struct BudgetSet {
    pub p_budget: Vec<Vec<f64>>,
    pub i_tol: Vec<Vec<f64>>,
    /// Per-group CI targets; empty in max-min mode.
    pub t_target: Vec<f64>,
    pub sigma2: f64,
    pub p0: f64,
    pub gamma0: f64,
    w_groups: Vec<CMatrix>,
    h_out: Vec<CMatrix>,
    grouping: Grouping,
    constellation: Constellation,
}

impl BudgetSet {
    pub fn grouping(&self) -> &Grouping {
        &self.grouping
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn is_enumerated(&self, g: usize) -> bool {
        !self.p_budget[g].is_empty()
    }

    /// `(P, I)` for symbol index `m` of group `g`.
    pub fn budget(&self, g: usize, m: usize) -> (f64, f64) {
        if self.is_enumerated(g) {
            let i = self.i_tol[g].get(m).copied().unwrap_or(0.0);
            return (self.p_budget[g][m], i);
        }
        let k_g = self.grouping.group(g).len();
        let s = self.constellation.symbols(&symbol_vector(m, self.constellation.order(), k_g));
        group_budget(&self.w_groups[g], &self.h_out[g], &s)
    }

    /// Mean of `I` over all symbol vectors of group `g`. Uses the stored
    /// table when enumerated, otherwise the closed form `Σ_k ‖W_gᴴ h_k‖² / |out|`,
    /// which the PSK product set reproduces exactly.
    pub fn mean_interference(&self, g: usize) -> f64 {
        if self.h_out[g].ncols() == 0 {
            return 0.0;
        }
        if self.is_enumerated(g) {
            return self.i_tol[g].iter().sum::<f64>() / self.i_tol[g].len() as f64;
        }
        (self.h_out[g].adjoint() * &self.w_groups[g]).norm_squared() / self.h_out[g].ncols() as f64
    }

    /// Sets `t_g` from the power-minimization BLP interference levels.
    pub fn with_powermin_targets(mut self) -> Self {
        let means: Vec<f64> = (0..self.grouping.len()).map(|g| self.mean_interference(g)).collect();
        self.t_target = derive_targets_powermin(self.gamma0, self.sigma2, &means);
        self
    }

    /// Writes `(group, symbol_index, p_budget_mw, i_tol_mw)` for every
    /// enumerated group.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["group", "symbol_index", "p_budget_mw", "i_tol_mw"])?;
        for g in 0..self.p_budget.len() {
            for m in 0..self.p_budget[g].len() {
                let (p, i) = self.budget(g, m);
                w.write_record([
                    g.to_string(),
                    m.to_string(),
                    format!("{p:.9e}"),
                    format!("{i:.9e}"),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Budgets from a BLP solution: power `‖W_g s‖²` and average out-of-group
/// leakage for every group symbol vector.
pub fn derive_budgets(
    blp: &BlpSolution,
    grouping: &Grouping,
    constellation: &Constellation,
    h: &CMatrix,
    sigma2: f64,
    enum_cap: usize,
) -> Result<BudgetSet> {
    let k = h.ncols();
    if blp.w.ncols() != k || grouping.users() != k || blp.w.nrows() != h.nrows() {
        return Err(Error::invalid("grouping, precoder and channel dimensions disagree"));
    }
    let single = grouping.len() == 1;
    let mut p_budget = Vec::new();
    let mut i_tol = Vec::new();
    let mut w_groups = Vec::new();
    let mut h_out = Vec::new();
    for g in 0..grouping.len() {
        let users = grouping.group(g);
        let w_g = select_columns(&blp.w, users);
        let out = select_columns(h, &grouping.complement(g));
        let count = symbol_vector_count(constellation.order(), users.len());
        let (mut ps, mut is) = (Vec::new(), Vec::new());
        if count <= enum_cap as u128 {
            for m in 0..count as usize {
                let s = constellation.symbols(&symbol_vector(m, constellation.order(), users.len()));
                let (p, i) = group_budget(&w_g, &out, &s);
                ps.push(p);
                if !single {
                    is.push(i);
                }
            }
        }
        p_budget.push(ps);
        i_tol.push(is);
        w_groups.push(w_g);
        h_out.push(out);
    }
    Ok(BudgetSet {
        p_budget,
        i_tol,
        t_target: Vec::new(),
        sigma2,
        p0: blp.total_power,
        gamma0: blp.sinr,
        w_groups,
        h_out,
        grouping: grouping.clone(),
        constellation: constellation.clone(),
    })
}

/// `t_g = sqrt(Γ0 (Σ_{j≠g} mean_j + σ²))` from the per-group mean leakage.
pub fn derive_targets_powermin(gamma0: f64, sigma2: f64, mean_interference: &[f64]) -> Vec<f64> {
    let total: f64 = mean_interference.iter().sum();
    mean_interference
        .iter()
        .map(|&own| (gamma0 * (total - own + sigma2)).sqrt())
        .collect()
}
