//! Experiment configuration: a flat TOML table with every key optional.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelModel, Scenario};
use crate::{Error, Result};

/// Default enumeration cap on precoders per table.
pub const DEFAULT_ENUM_CAP: usize = 1 << 20;
/// Capacity of the on-demand memo per channel realization.
pub const MEMO_CAPACITY: usize = 1 << 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[serde(alias = "max-min")]
    Maxmin,
    #[serde(alias = "power-min")]
    Powermin,
}

/// Precoding scheme under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Blp,
    /// Grouped SLP; one group is traditional SLP. `random` swaps the
    /// proposed grouping for a seeded random partition.
    Gslp { groups: usize, random: bool },
}

impl Scheme {
    pub fn groups(&self) -> Option<usize> {
        match self {
            Scheme::Blp => None,
            Scheme::Gslp { groups, .. } => Some(*groups),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Blp => write!(f, "blp"),
            Scheme::Gslp { groups: 1, random: false } => write!(f, "slp"),
            Scheme::Gslp { groups, random: false } => write!(f, "gslp{groups}"),
            Scheme::Gslp { groups, random: true } => write!(f, "gslp{groups}-random"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    /// Accepts `blp`, `slp`, `gslp<G>` and `gslp<G>-random`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown scheme `{s}`"));
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "blp" => return Ok(Scheme::Blp),
            "slp" => return Ok(Scheme::Gslp { groups: 1, random: false }),
            _ => {}
        }
        let rest = lower.strip_prefix("gslp").ok_or_else(bad)?;
        let (digits, random) = match rest.strip_suffix("-random") {
            Some(d) => (d, true),
            None => (rest, false),
        };
        let groups: usize = digits.parse().map_err(|_| bad())?;
        if groups == 0 {
            return Err(bad());
        }
        Ok(Scheme::Gslp { groups, random })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ChannelModel,
    pub nt: usize,
    pub users: usize,
    /// Group count used by the `table` and `bench` subcommands.
    pub groups: usize,
    pub omega: usize,
    pub mode: Mode,
    pub power_dbm_grid: Vec<f64>,
    pub target_sinr_db_grid: Vec<f64>,
    pub sigma2_dbm: f64,
    /// Total transmitted slots per grid point, spread over the channels.
    pub trials: u64,
    /// Independent channel realizations per grid point.
    pub channels: u64,
    pub seed: u64,
    pub schemes: Vec<String>,
    pub spread_deg: f64,
    pub cluster_centers_deg: Vec<f64>,
    pub cluster_delta_deg: f64,
    pub enum_cap: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            model: ChannelModel::Rayleigh,
            nt: 6,
            users: 6,
            groups: 2,
            omega: 4,
            mode: Mode::Maxmin,
            power_dbm_grid: vec![20.0, 25.0, 30.0, 35.0],
            target_sinr_db_grid: vec![5.0, 7.0, 9.0, 11.0],
            sigma2_dbm: 10.0,
            trials: 10_000,
            channels: 10,
            seed: 1,
            schemes: vec!["blp".into(), "slp".into(), "gslp2".into(), "gslp3".into()],
            spread_deg: 8.0,
            cluster_centers_deg: vec![-60.0, 60.0],
            cluster_delta_deg: 5.0,
            enum_cap: DEFAULT_ENUM_CAP,
        }
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.nt == 0 || self.users == 0 {
            return fail("nt and users must be at least 1");
        }
        if self.groups == 0 || self.groups > self.users {
            return fail("groups must lie in 1..=users");
        }
        if self.omega < 2 || !self.omega.is_multiple_of(2) {
            return fail("omega must be an even PSK order of at least 2");
        }
        if self.trials == 0 || self.channels == 0 || self.channels > self.trials {
            return fail("need 1 <= channels <= trials");
        }
        if !self.sigma2_dbm.is_finite() {
            return fail("sigma2_dbm must be finite");
        }
        if self.power_dbm_grid.iter().chain(&self.target_sinr_db_grid).any(|v| !v.is_finite()) {
            return fail("grid values must be finite");
        }
        if self.enum_cap == 0 {
            return fail("enum_cap must be positive");
        }
        if self.model == ChannelModel::Onering && self.cluster_centers_deg.is_empty() {
            return fail("one-ring model needs cluster centers");
        }
        for scheme in self.parsed_schemes()? {
            if let Some(g) = scheme.groups() {
                if g > self.users {
                    return Err(Error::Config(format!("scheme {scheme} has more groups than users")));
                }
            }
        }
        Ok(())
    }

    pub fn parsed_schemes(&self) -> Result<Vec<Scheme>> {
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        self.schemes.iter().map(|s| s.parse()).collect()
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            model: self.model,
            n_t: self.nt,
            users: self.users,
            spread_deg: self.spread_deg,
            cluster_centers_deg: self.cluster_centers_deg.clone(),
            cluster_delta_deg: self.cluster_delta_deg,
        }
    }

    pub fn sigma2_mw(&self) -> f64 {
        dbm_to_mw(self.sigma2_dbm)
    }

    /// Slots transmitted over channel realization `c`.
    pub fn slots_for_channel(&self, c: u64) -> u64 {
        self.trials / self.channels + u64::from(c < self.trials % self.channels)
    }
}
