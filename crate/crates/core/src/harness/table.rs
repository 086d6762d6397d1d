//! Precoder tables: one designed precoder per group symbol vector, and the
//! composition of the transmitted signal as their sum.
//!
//! Negating every symbol of a group negates the CI rows of its design
//! problem and leaves budgets and leakage rows unchanged, so the optimal
//! precoder is negated as well. Only the half of the indices whose first
//! symbol lies in the lower half of the constellation is solved; the rest
//! are exact negations.

use std::num::NonZeroUsize;

use lru::LruCache;
use num_complex::Complex64;
use rayon::prelude::*;

use super::config::Mode;
use crate::blp::BudgetSet;
use crate::constellation::{symbol_vector, symbol_vector_count, symbol_vector_index, Constellation};
use crate::grouping::{select_columns, Grouping};
use crate::maxmin::{group_margin, solve_maxmin, SolveDiagnostics, SolverConfig};
use crate::powermin::solve_powermin;
use crate::transform::build_real_problem;
use crate::{CMatrix, CVector, Error, Result};

/// One designed precoder with its solver record.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub precoder: CVector,
    /// Smallest CI margin over the group's users.
    pub margin: f64,
    pub diag: SolveDiagnostics,
}

impl Entry {
    pub fn power(&self) -> f64 {
        self.precoder.norm_squared()
    }

    fn negated(&self) -> Self {
        Self {
            precoder: -&self.precoder,
            margin: self.margin,
            diag: self.diag.clone(),
        }
    }
}

/// Inputs shared by every design problem of one channel realization.
#[derive(Debug, Clone)]
pub struct DesignContext {
    pub mode: Mode,
    pub solver: SolverConfig,
    pub budgets: BudgetSet,
    h_groups: Vec<CMatrix>,
    h_out: Vec<CMatrix>,
}

impl DesignContext {
    pub fn new(h: &CMatrix, budgets: BudgetSet, mode: Mode, solver: SolverConfig) -> Result<Self> {
        let grouping = budgets.grouping();
        if grouping.users() != h.ncols() {
            return Err(Error::invalid("grouping and channel disagree on the user count"));
        }
        if mode == Mode::Powermin && budgets.t_target.len() != grouping.len() {
            return Err(Error::invalid("power minimization needs per-group CI targets"));
        }
        let h_groups = grouping.groups().iter().map(|g| select_columns(h, g)).collect();
        let h_out = (0..grouping.len()).map(|g| select_columns(h, &grouping.complement(g))).collect();
        Ok(Self { mode, solver, budgets, h_groups, h_out })
    }

    pub fn grouping(&self) -> &Grouping {
        self.budgets.grouping()
    }

    pub fn constellation(&self) -> &Constellation {
        self.budgets.constellation()
    }

    /// `Ω^{K_g}`.
    pub fn group_count(&self, g: usize) -> u128 {
        symbol_vector_count(self.constellation().order(), self.grouping().group(g).len())
    }

    /// Representative of the negation class of `m` and whether `m` is the
    /// negated member.
    pub fn canonical(&self, g: usize, m: usize) -> (usize, bool) {
        let c = self.constellation();
        let digits = symbol_vector(m, c.order(), self.grouping().group(g).len());
        if digits[0] < c.order() / 2 {
            return (m, false);
        }
        let neg: Vec<usize> = digits.iter().map(|&d| c.negated_index(d)).collect();
        (symbol_vector_index(&neg, c.order()), true)
    }

    /// Solves the design problem of symbol index `m` in group `g` directly.
    pub fn solve(&self, g: usize, m: usize) -> Result<Entry> {
        let c = self.constellation();
        let k_g = self.grouping().group(g).len();
        let s: Vec<Complex64> = symbol_vector(m, c.order(), k_g).iter().map(|&i| c.point(i)).collect();
        let problem = build_real_problem(&self.h_groups[g], &self.h_out[g], &s, c.tan_half_angle())?;
        let (p_budget, i_tol) = self.budgets.budget(g, m);
        match self.mode {
            Mode::Maxmin => {
                let sol = solve_maxmin(&problem, p_budget, i_tol, &self.solver)?;
                Ok(Entry { precoder: sol.precoder, margin: sol.t, diag: sol.diag })
            }
            Mode::Powermin => {
                let sol = solve_powermin(&problem, self.budgets.t_target[g], i_tol, &self.solver)?;
                let margin = group_margin(&problem, &sol.x_tilde);
                Ok(Entry { precoder: sol.precoder, margin, diag: sol.diag })
            }
        }
    }

    /// Entry `m` of group `g` through its negation-class representative.
    pub fn design(&self, g: usize, m: usize) -> Result<Entry> {
        let (rep, negate) = self.canonical(g, m);
        let entry = self
            .solve(g, rep)
            .map_err(|e| Error::Table { group: g, index: m, source: Box::new(e) })?;
        Ok(if negate { entry.negated() } else { entry })
    }
}

/// Every precoder of every group, in symbol-vector index order.
#[derive(Debug, Clone)]
pub struct PrecoderTable {
    pub mode: Mode,
    pub entries: Vec<Vec<Entry>>,
    pub grouping: Grouping,
    pub constellation: Constellation,
    pub solver: SolverConfig,
    /// Seed of the channel realization, when known.
    pub channel_seed: Option<u64>,
}

impl PrecoderTable {
    pub fn len(&self) -> usize {
        self.entries.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn entry(&self, g: usize, m: usize) -> Option<&Entry> {
        self.entries.get(g)?.get(m)
    }

    /// Writes one row per precoder: group, index, power, margin, solver
    /// record and the antenna weights.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let n_t = self.entries.iter().flatten().next().map_or(0, |e| e.precoder.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["group", "symbol_index", "power_mw", "margin", "iterations", "converged"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for n in 0..n_t {
            header.push(format!("x{n}_re"));
            header.push(format!("x{n}_im"));
        }
        w.write_record(&header)?;
        for (g, group) in self.entries.iter().enumerate() {
            for (m, e) in group.iter().enumerate() {
                let mut row = vec![
                    g.to_string(),
                    m.to_string(),
                    format!("{:.9e}", e.power()),
                    format!("{:.9e}", e.margin),
                    e.diag.outer_iterations.to_string(),
                    e.diag.converged.to_string(),
                ];
                for v in e.precoder.iter() {
                    row.push(format!("{:.9e}", v.re));
                    row.push(format!("{:.9e}", v.im));
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Solves all `Σ_g Ω^{K_g}` problems. Fails if the total exceeds `enum_cap`
/// or any design fails; the error names the group and symbol index.
pub fn build_precoder_table(ctx: &DesignContext, enum_cap: usize, channel_seed: Option<u64>) -> Result<PrecoderTable> {
    let counts: Vec<u128> = (0..ctx.grouping().len()).map(|g| ctx.group_count(g)).collect();
    let total: u128 = counts.iter().sum();
    if total > enum_cap as u128 {
        return Err(Error::Capacity { count: total, cap: enum_cap });
    }
    // solve the representatives in parallel, then fill in index order
    let reps: Vec<(usize, usize)> = counts
        .iter()
        .enumerate()
        .flat_map(|(g, &n)| (0..n as usize).map(move |m| (g, m)))
        .filter(|&(g, m)| !ctx.canonical(g, m).1)
        .collect();
    let solved: Vec<Entry> = reps
        .par_iter()
        .map(|&(g, m)| ctx.solve(g, m).map_err(|e| Error::Table { group: g, index: m, source: Box::new(e) }))
        .collect::<Result<_>>()?;
    let mut lookup: Vec<Vec<Option<Entry>>> = counts.iter().map(|&n| vec![None; n as usize]).collect();
    for (&(g, m), e) in reps.iter().zip(solved) {
        lookup[g][m] = Some(e);
    }
    let mut entries = Vec::with_capacity(counts.len());
    for (g, group) in lookup.iter().enumerate() {
        let mut out = Vec::with_capacity(group.len());
        for m in 0..group.len() {
            let (rep, negate) = ctx.canonical(g, m);
            let e = group[rep].as_ref().ok_or_else(|| Error::Numerical("missing table representative".into()))?;
            out.push(if negate { e.negated() } else { e.clone() });
        }
        entries.push(out);
    }
    Ok(PrecoderTable {
        mode: ctx.mode,
        entries,
        grouping: ctx.grouping().clone(),
        constellation: ctx.constellation().clone(),
        solver: ctx.solver,
        channel_seed,
    })
}

/// Symbol index of each group's slice of a full symbol vector.
pub fn group_indices(grouping: &Grouping, order: usize, symbols: &[usize]) -> Result<Vec<usize>> {
    if symbols.len() != grouping.users() {
        return Err(Error::invalid("symbol vector length differs from the user count"));
    }
    Ok(grouping
        .groups()
        .iter()
        .map(|users| {
            let digits: Vec<usize> = users.iter().map(|&k| symbols[k]).collect();
            symbol_vector_index(&digits, order)
        })
        .collect())
}

/// `Σ_g x_{g,m_g}` for the full symbol vector given as constellation indices.
pub fn compose_precoder(table: &PrecoderTable, symbols: &[usize]) -> Result<CVector> {
    if symbols.iter().any(|&i| i >= table.constellation.order()) {
        return Err(Error::invalid("symbol index outside the constellation"));
    }
    let indices = group_indices(&table.grouping, table.constellation.order(), symbols)?;
    let mut x: Option<CVector> = None;
    for (g, &m) in indices.iter().enumerate() {
        let e = table
            .entry(g, m)
            .ok_or_else(|| Error::Numerical(format!("table has no entry ({g}, {m})")))?;
        x = Some(match x {
            None => e.precoder.clone(),
            Some(acc) => acc + &e.precoder,
        });
    }
    x.ok_or_else(|| Error::invalid("empty grouping"))
}

/// Designs entries on first use and memoizes them with LRU eviction.
///
/// Power-minimization instances the solver reports infeasible are memoized
/// as `None`; any other failure is returned as an error.
pub struct OnDemand {
    ctx: DesignContext,
    cache: LruCache<(usize, usize), Option<CVector>>,
}

impl OnDemand {
    pub fn new(ctx: DesignContext, capacity: usize) -> Self {
        let cap = NonZeroUsize::new(capacity.max(1)).expect("capacity is at least one");
        Self { ctx, cache: LruCache::new(cap) }
    }

    pub fn context(&self) -> &DesignContext {
        &self.ctx
    }

    /// Precoder of the representative entry, solved if not cached.
    fn representative(&mut self, g: usize, rep: usize) -> Result<Option<&CVector>> {
        if !self.cache.contains(&(g, rep)) {
            let value = match self.ctx.solve(g, rep) {
                Ok(e) => Some(e.precoder),
                Err(Error::Infeasible(_)) if self.ctx.mode == Mode::Powermin => None,
                Err(e) => return Err(Error::Table { group: g, index: rep, source: Box::new(e) }),
            };
            self.cache.put((g, rep), value);
        }
        Ok(self.cache.get(&(g, rep)).and_then(Option::as_ref))
    }

    /// `x_{g,m}`, or `None` for an infeasible power-minimization entry.
    pub fn precoder(&mut self, g: usize, m: usize) -> Result<Option<CVector>> {
        let (rep, negate) = self.ctx.canonical(g, m);
        Ok(self.representative(g, rep)?.map(|x| if negate { -x } else { x.clone() }))
    }

    /// Composed precoder for a full symbol vector, or `None` if any group
    /// entry is infeasible.
    pub fn compose(&mut self, symbols: &[usize]) -> Result<Option<CVector>> {
        let order = self.ctx.constellation().order();
        let indices = group_indices(self.ctx.grouping(), order, symbols)?;
        let mut x = CVector::zeros(self.ctx.h_groups[0].nrows());
        for (g, &m) in indices.iter().enumerate() {
            match self.precoder(g, m)? {
                Some(p) => x += p,
                None => return Ok(None),
            }
        }
        Ok(Some(x))
    }
}
