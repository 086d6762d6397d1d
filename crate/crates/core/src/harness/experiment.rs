//! Monte Carlo SER and average-power experiments, and the table-build
//! benchmark.
//!
//! Work is split into independent items (grid point, channel realization).
//! Each item draws its symbols and noise from streams keyed by the channel
//! index, so every scheme and grid point sees the same random numbers, and
//! items are reduced in index order regardless of the thread count.

use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::config::{db_to_linear, dbm_to_mw, mw_to_dbm, Config, Mode, Scheme, MEMO_CAPACITY};
use super::table::{build_precoder_table, group_indices, DesignContext, OnDemand, PrecoderTable};
use crate::blp::{derive_budgets, powermin_blp, sinr_balancing_blp, BlpSolution};
use crate::channel::scenario_channel;
use crate::constellation::Constellation;
use crate::grouping::{group_users, random_grouping, Grouping};
use crate::maxmin::SolverConfig;
use crate::rng::{complex_gaussian, derive_seed, stream, Purpose};
use crate::{CMatrix, CVector, Error, Result};

/// Largest tolerated fraction of slots lost to infeasible designs.
pub const FAILURE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult<R> {
    pub rows: Vec<R>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SerRow {
    pub scheme: String,
    pub power_dbm: f64,
    pub errors: u64,
    /// Detected user symbols, `K` per slot.
    pub symbols: u64,
    pub trials: u64,
    pub seed: u64,
    /// Mean composed power before the per-slot rescale to `P`.
    pub mean_prescale_power_mw: f64,
}

impl SerRow {
    pub fn ser(&self) -> f64 {
        self.errors as f64 / self.symbols as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub scheme: String,
    pub target_sinr_db: f64,
    pub avg_power_mw: f64,
    pub errors: u64,
    pub symbols: u64,
    /// Slots that entered the averages.
    pub trials: u64,
    /// Slots excluded because a design was infeasible.
    pub failed: u64,
    pub seed: u64,
    /// Mean over slots of `t_g²` divided by the measured leakage from the
    /// other groups plus noise, per user.
    pub sinr_proxy: f64,
}

impl PowerRow {
    pub fn ser(&self) -> f64 {
        self.errors as f64 / self.symbols as f64
    }

    pub fn avg_power_dbm(&self) -> f64 {
        mw_to_dbm(self.avg_power_mw)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub scheme: String,
    pub k: usize,
    pub groups: usize,
    pub precoders: u128,
    pub build_seconds: f64,
    pub threads: usize,
}

/// Channel of realization `c`.
pub fn channel_for(cfg: &Config, c: u64) -> Result<CMatrix> {
    Ok(scenario_channel(&cfg.scenario(), derive_seed(cfg.seed, c))?.h)
}

/// Grouping a scheme uses on channel realization `c`; `None` for BLP.
pub fn grouping_for(scheme: Scheme, h: &CMatrix, seed: u64, c: u64) -> Result<Option<Grouping>> {
    match scheme {
        Scheme::Blp => Ok(None),
        Scheme::Gslp { groups: 1, .. } => Ok(Some(Grouping::single(h.ncols()))),
        Scheme::Gslp { groups, random: false } => group_users(h, groups).map(Some),
        Scheme::Gslp { groups, random: true } => random_grouping(h.ncols(), groups, seed, c).map(Some),
    }
}

fn balancing(h: &CMatrix, p0: f64, sigma2: f64) -> Result<BlpSolution> {
    match sinr_balancing_blp(h, p0, sigma2) {
        // the last iterate is still a valid precoder at full power
        Err(Error::BlpNotConverged { last, .. }) => Ok(*last),
        other => other,
    }
}

/// Design context of one grouping for the mode's BLP solution.
pub fn design_context(
    cfg: &Config,
    h: &CMatrix,
    blp: &BlpSolution,
    grouping: &Grouping,
    mode: Mode,
    solver: SolverConfig,
) -> Result<DesignContext> {
    let constellation = Constellation::new(cfg.omega)?;
    let budgets = derive_budgets(blp, grouping, &constellation, h, cfg.sigma2_mw(), cfg.enum_cap)?;
    let budgets = match mode {
        Mode::Maxmin => budgets,
        Mode::Powermin => budgets.with_powermin_targets(),
    };
    DesignContext::new(h, budgets, mode, solver)
}

/// BLP solution of the mode at grid value `value` (dBm for max-min, dB for
/// power minimization).
pub fn blp_for(cfg: &Config, h: &CMatrix, mode: Mode, value: f64) -> Result<BlpSolution> {
    match mode {
        Mode::Maxmin => balancing(h, dbm_to_mw(value), cfg.sigma2_mw()),
        Mode::Powermin => powermin_blp(h, db_to_linear(value), cfg.sigma2_mw()),
    }
}

/// Full table of channel realization 0 for `cfg.groups` proposed groups, at
/// the first grid value of the configured mode.
pub fn table_for_config(cfg: &Config) -> Result<PrecoderTable> {
    cfg.validate()?;
    let h = channel_for(cfg, 0)?;
    let scheme = Scheme::Gslp { groups: cfg.groups, random: false };
    let grouping = grouping_for(scheme, &h, cfg.seed, 0)?.expect("grouped scheme");
    let value = first_grid_value(cfg)?;
    let blp = blp_for(cfg, &h, cfg.mode, value)?;
    let ctx = design_context(cfg, &h, &blp, &grouping, cfg.mode, SolverConfig::default())?;
    build_precoder_table(&ctx, cfg.enum_cap, Some(derive_seed(cfg.seed, 0)))
}

fn first_grid_value(cfg: &Config) -> Result<f64> {
    let grid = match cfg.mode {
        Mode::Maxmin => &cfg.power_dbm_grid,
        Mode::Powermin => &cfg.target_sinr_db_grid,
    };
    grid.first().copied().ok_or_else(|| Error::Config("the grid of the configured mode is empty".into()))
}

enum Source {
    Blp(CMatrix),
    Grouped(Box<OnDemand>),
}

impl Source {
    fn transmit(&mut self, symbols: &[usize], s: &CVector) -> Result<Option<CVector>> {
        match self {
            Source::Blp(w) => Ok(Some(&*w * s)),
            Source::Grouped(d) => d.compose(symbols),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    errors: u64,
    symbols: u64,
    slots: u64,
    failed: u64,
    power: f64,
    prescale: f64,
    sinr_proxy: f64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.errors += o.errors;
        self.symbols += o.symbols;
        self.slots += o.slots;
        self.failed += o.failed;
        self.power += o.power;
        self.prescale += o.prescale;
        self.sinr_proxy += o.sinr_proxy;
    }
}

struct Prepared {
    h: CMatrix,
    groupings: Vec<Option<Grouping>>,
}

fn prepare(cfg: &Config, schemes: &[Scheme]) -> Result<Vec<Prepared>> {
    (0..cfg.channels)
        .into_par_iter()
        .map(|c| {
            let h = channel_for(cfg, c)?;
            let groupings = schemes
                .iter()
                .map(|&s| grouping_for(s, &h, cfg.seed, c))
                .collect::<Result<_>>()?;
            Ok(Prepared { h, groupings })
        })
        .collect()
}

fn sources(cfg: &Config, prep: &Prepared, blp: &BlpSolution, mode: Mode) -> Result<Vec<Source>> {
    prep.groupings
        .iter()
        .map(|g| match g {
            None => Ok(Source::Blp(blp.w.clone())),
            Some(grouping) => {
                let ctx = design_context(cfg, &prep.h, blp, grouping, mode, SolverConfig::default())?;
                let total: u128 = (0..grouping.len()).map(|g| ctx.group_count(g)).sum();
                let cap = total.min(MEMO_CAPACITY as u128) as usize;
                Ok(Source::Grouped(Box::new(OnDemand::new(ctx, cap))))
            }
        })
        .collect()
}

fn count_errors(constellation: &Constellation, h: &CMatrix, x: &CVector, noise: &[Complex64], symbols: &[usize]) -> u64 {
    let y = h.adjoint() * x;
    symbols
        .iter()
        .enumerate()
        .filter(|&(k, &sk)| constellation.detect(y[k] + noise[k]) != sk)
        .count() as u64
}

/// Runs the slots of channel realization `c` for every scheme.
fn run_slots(
    cfg: &Config,
    c: u64,
    h: &CMatrix,
    sources: &mut [Source],
    rescale_to: Option<f64>,
) -> Result<Vec<Tally>> {
    let constellation = Constellation::new(cfg.omega)?;
    let k = cfg.users;
    let sigma = cfg.sigma2_mw().sqrt();
    let mut sym_rng = stream(cfg.seed, Purpose::Symbols, c);
    let mut noise_rng = stream(cfg.seed, Purpose::Noise, c);
    let mut tallies = vec![Tally::default(); sources.len()];
    for _ in 0..cfg.slots_for_channel(c) {
        let symbols: Vec<usize> = (0..k).map(|_| sym_rng.random_range(0..cfg.omega)).collect();
        let noise: Vec<Complex64> = (0..k).map(|_| complex_gaussian(&mut noise_rng) * sigma).collect();
        let s = constellation.symbols(&symbols);
        for (src, tally) in sources.iter_mut().zip(tallies.iter_mut()) {
            let Some(mut x) = src.transmit(&symbols, &s)? else {
                tally.failed += 1;
                continue;
            };
            let power = x.norm_squared();
            tally.prescale += power;
            if let Some(p) = rescale_to {
                if power > 0.0 {
                    x *= Complex64::new((p / power).sqrt(), 0.0);
                }
            }
            tally.power += x.norm_squared();
            if let (Source::Grouped(d), None) = (&mut *src, rescale_to) {
                tally.sinr_proxy += sinr_proxy(d, h, &x, &symbols, cfg.sigma2_mw())?;
            }
            tally.errors += count_errors(&constellation, h, &x, &noise, &symbols);
            tally.symbols += k as u64;
            tally.slots += 1;
        }
    }
    Ok(tallies)
}

/// Mean over users of `t_g²` divided by the leakage of the other groups'
/// precoders plus noise.
fn sinr_proxy(d: &mut OnDemand, h: &CMatrix, x: &CVector, symbols: &[usize], sigma2: f64) -> Result<f64> {
    let grouping = d.context().grouping().clone();
    let order = d.context().constellation().order();
    let indices = group_indices(&grouping, order, symbols)?;
    let mut total = 0.0;
    for (g, users) in grouping.groups().iter().enumerate() {
        // x minus the own-group precoder leaves the other groups' leakage
        let own = d
            .precoder(g, indices[g])?
            .ok_or_else(|| Error::Numerical("composed slot has an infeasible entry".into()))?;
        let others = x - own;
        let t = d.context().budgets.t_target[g];
        for &u in users {
            let leak = h.column(u).dotc(&others).norm_sqr();
            total += t * t / (leak + sigma2);
        }
    }
    Ok(total / grouping.users() as f64)
}

fn parallel_items<T: Send>(
    grid_len: usize,
    channels: u64,
    f: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<Vec<Vec<T>>> {
    let items: Vec<(usize, u64)> = (0..grid_len).flat_map(|i| (0..channels).map(move |c| (i, c))).collect();
    let out: Vec<T> = items.par_iter().map(|&(i, c)| f(i, c)).collect::<Result<_>>()?;
    let mut grid: Vec<Vec<T>> = (0..grid_len).map(|_| Vec::new()).collect();
    for ((i, _), t) in items.into_iter().zip(out) {
        grid[i].push(t);
    }
    Ok(grid)
}

fn reduce(per_channel: &[Vec<Tally>], schemes: usize) -> Vec<Tally> {
    let mut total = vec![Tally::default(); schemes];
    for tallies in per_channel {
        for (t, o) in total.iter_mut().zip(tallies) {
            t.add(o);
        }
    }
    total
}

/// Max-min SER versus transmit power, every slot rescaled to `P`.
pub fn run_ser_experiment(cfg: &Config) -> Result<ExperimentResult<SerRow>> {
    cfg.validate()?;
    let start = Instant::now();
    let schemes = cfg.parsed_schemes()?;
    if cfg.power_dbm_grid.is_empty() {
        return Err(Error::Config("power_dbm_grid is empty".into()));
    }
    let prepared = prepare(cfg, &schemes)?;
    let grid = parallel_items(cfg.power_dbm_grid.len(), cfg.channels, |i, c| {
        let prep = &prepared[c as usize];
        let p = dbm_to_mw(cfg.power_dbm_grid[i]);
        let blp = balancing(&prep.h, p, cfg.sigma2_mw())?;
        let mut srcs = sources(cfg, prep, &blp, Mode::Maxmin)?;
        run_slots(cfg, c, &prep.h, &mut srcs, Some(p))
    })?;
    let mut rows = Vec::new();
    for (i, per_channel) in grid.iter().enumerate() {
        for (scheme, t) in schemes.iter().zip(reduce(per_channel, schemes.len())) {
            rows.push(SerRow {
                scheme: scheme.to_string(),
                power_dbm: cfg.power_dbm_grid[i],
                errors: t.errors,
                symbols: t.symbols,
                trials: t.slots,
                seed: cfg.seed,
                mean_prescale_power_mw: t.prescale / t.slots as f64,
            });
        }
    }
    Ok(ExperimentResult { rows, wall_seconds: start.elapsed().as_secs_f64() })
}

/// Power minimization: average transmit power and SER versus the SINR target.
///
/// Slots whose design is infeasible are excluded from the averages and
/// counted; more than [`FAILURE_THRESHOLD`] of them is an error.
pub fn run_powermin_experiment(cfg: &Config) -> Result<ExperimentResult<PowerRow>> {
    cfg.validate()?;
    let start = Instant::now();
    let schemes = cfg.parsed_schemes()?;
    if cfg.target_sinr_db_grid.is_empty() {
        return Err(Error::Config("target_sinr_db_grid is empty".into()));
    }
    let prepared = prepare(cfg, &schemes)?;
    let grid = parallel_items(cfg.target_sinr_db_grid.len(), cfg.channels, |i, c| {
        let prep = &prepared[c as usize];
        let gamma0 = db_to_linear(cfg.target_sinr_db_grid[i]);
        match powermin_blp(&prep.h, gamma0, cfg.sigma2_mw()) {
            Ok(blp) => {
                let mut srcs = sources(cfg, prep, &blp, Mode::Powermin)?;
                run_slots(cfg, c, &prep.h, &mut srcs, None)
            }
            Err(Error::Infeasible(_)) => {
                let lost = Tally { failed: cfg.slots_for_channel(c), ..Tally::default() };
                Ok(vec![lost; schemes.len()])
            }
            Err(e) => Err(e),
        }
    })?;
    let mut rows = Vec::new();
    for (i, per_channel) in grid.iter().enumerate() {
        for (scheme, t) in schemes.iter().zip(reduce(per_channel, schemes.len())) {
            let target = cfg.target_sinr_db_grid[i];
            let attempted = t.slots + t.failed;
            if t.failed as f64 > FAILURE_THRESHOLD * attempted as f64 {
                return Err(Error::Infeasible(format!(
                    "{scheme} at {target} dB: {} of {attempted} slots infeasible",
                    t.failed
                )));
            }
            rows.push(PowerRow {
                scheme: scheme.to_string(),
                target_sinr_db: target,
                avg_power_mw: t.power / t.slots as f64,
                errors: t.errors,
                symbols: t.symbols,
                trials: t.slots,
                failed: t.failed,
                seed: cfg.seed,
                sinr_proxy: t.sinr_proxy / t.slots as f64,
            });
        }
    }
    Ok(ExperimentResult { rows, wall_seconds: start.elapsed().as_secs_f64() })
}

/// Time to design complete tables for every grouped scheme on channel
/// realization 0, with one thread and with the current pool.
pub fn bench(cfg: &Config) -> Result<ExperimentResult<BenchRow>> {
    cfg.validate()?;
    let start = Instant::now();
    let h = channel_for(cfg, 0)?;
    let value = first_grid_value(cfg)?;
    let blp = blp_for(cfg, &h, cfg.mode, value)?;
    let pool_threads = rayon::current_num_threads();
    let mut thread_counts = vec![1];
    if pool_threads > 1 {
        thread_counts.push(pool_threads);
    }
    let mut rows = Vec::new();
    for scheme in cfg.parsed_schemes()? {
        let Some(groups) = scheme.groups() else { continue };
        for &threads in &thread_counts {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            let (precoders, seconds) = pool.install(|| -> Result<(u128, f64)> {
                let t0 = Instant::now();
                let grouping = grouping_for(scheme, &h, cfg.seed, 0)?.expect("grouped scheme");
                let ctx = design_context(cfg, &h, &blp, &grouping, cfg.mode, SolverConfig::default())?;
                let table = build_precoder_table(&ctx, cfg.enum_cap, None)?;
                Ok((table.len() as u128, t0.elapsed().as_secs_f64()))
            })?;
            rows.push(BenchRow {
                scheme: scheme.to_string(),
                k: cfg.users,
                groups,
                precoders,
                build_seconds: seconds,
                threads,
            });
        }
    }
    Ok(ExperimentResult { rows, wall_seconds: start.elapsed().as_secs_f64() })
}
