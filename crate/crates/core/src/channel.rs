//! Downlink channel generation: i.i.d. Rayleigh fading and the one-ring
//! correlated model.
//!
//! Every generator is a pure function of its seed. Column `k` of a channel
//! matrix is the channel vector of user `k`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::hermitian_sqrt;
use crate::rng::{complex_gaussian, stream, Purpose};
use crate::{CMatrix, CVector, Error, Result};

const QUADRATURE_ORDER: usize = 64;

/// `n_t x k` matrix with i.i.d. unit-variance circular Gaussian entries.
pub fn rayleigh_channel(n_t: usize, k: usize, seed: u64) -> Result<CMatrix> {
    if n_t == 0 || k == 0 {
        return Err(Error::invalid("channel dimensions must be at least 1"));
    }
    let mut rng = stream(seed, Purpose::Channel, 0);
    Ok(CMatrix::from_fn(n_t, k, |_, _| complex_gaussian(&mut rng)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneRingSpec {
    /// User azimuth seen from the array, radians.
    pub azimuth: f64,
    /// Half-width of the angular spread, radians.
    pub spread: f64,
    pub n_t: usize,
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// One-ring correlation `R(m,p) = (1/2Δ) ∫ e^{-jπ(m-p) sin β} dβ` over
/// `β ∈ [θ-Δ, θ+Δ]`, by Gauss-Legendre quadrature. Only the upper triangle
/// is integrated; the lower triangle is its conjugate.
pub fn one_ring_correlation(spec: &OneRingSpec) -> Result<CMatrix> {
    if !(spec.spread > 0.0) {
        return Err(Error::invalid("one-ring angular spread must be positive"));
    }
    let (nodes, weights) = gauss_legendre(QUADRATURE_ORDER);
    let n = spec.n_t;
    // R depends on m - p only
    let lag: Vec<Complex64> = (0..n)
        .map(|d| {
            if d == 0 {
                return Complex64::new(1.0, 0.0);
            }
            let sum: Complex64 = nodes
                .iter()
                .zip(&weights)
                .map(|(&x, &w)| {
                    let beta = spec.azimuth + spec.spread * x;
                    w * Complex64::from_polar(1.0, -PI * d as f64 * beta.sin())
                })
                .sum();
            sum * 0.5
        })
        .collect();
    Ok(CMatrix::from_fn(n, n, |m, p| {
        if m >= p {
            lag[m - p]
        } else {
            lag[p - m].conj()
        }
    }))
}

/// `h = R^{1/2} ĥ` with `ĥ` standard complex Gaussian drawn from `rng`.
pub fn correlated_channel<R: Rng + ?Sized>(r: &CMatrix, rng: &mut R) -> Result<CVector> {
    let sqrt = correlation_sqrt(r)?;
    let hhat = CVector::from_fn(r.nrows(), |_, _| complex_gaussian(rng));
    Ok(sqrt * hhat)
}

/// Principal square root of a correlation matrix, rejecting non-Hermitian input.
pub fn correlation_sqrt(r: &CMatrix) -> Result<CMatrix> {
    if !r.is_square() {
        return Err(Error::invalid("correlation matrix must be square"));
    }
    let asym = crate::linalg::max_abs_diff(r, &r.adjoint());
    if asym > 1e-8 {
        return Err(Error::invalid(format!(
            "correlation matrix is not Hermitian (max asymmetry {asym:.3e})"
        )));
    }
    Ok(hermitian_sqrt(r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    Rayleigh,
    #[serde(alias = "one-ring")]
    Onering,
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rayleigh" => Ok(ChannelModel::Rayleigh),
            "onering" | "one-ring" => Ok(ChannelModel::Onering),
            other => Err(Error::Config(format!("unknown channel model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: ChannelModel,
    pub n_t: usize,
    pub users: usize,
    /// One-ring angular spread Δ, degrees.
    pub spread_deg: f64,
    /// One-ring cluster centers, degrees.
    pub cluster_centers_deg: Vec<f64>,
    /// Half-width of each azimuth cluster, degrees.
    pub cluster_delta_deg: f64,
}

impl Scenario {
    pub fn rayleigh(n_t: usize, users: usize) -> Self {
        Self {
            model: ChannelModel::Rayleigh,
            n_t,
            users,
            spread_deg: 8.0,
            cluster_centers_deg: vec![-60.0, 60.0],
            cluster_delta_deg: 5.0,
        }
    }

    pub fn one_ring(n_t: usize, users: usize) -> Self {
        Self {
            model: ChannelModel::Onering,
            ..Self::rayleigh(n_t, users)
        }
    }

    /// Cluster of each user: the users are split into contiguous, nearly
    /// equal blocks in cluster order.
    pub fn cluster_of(&self, user: usize) -> usize {
        user * self.cluster_centers_deg.len() / self.users
    }
}

/// Channel and, for the one-ring model, the per-user azimuths in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioChannel {
    pub h: CMatrix,
    pub azimuths_deg: Vec<f64>,
}

pub fn scenario_channel(scenario: &Scenario, seed: u64) -> Result<ScenarioChannel> {
    match scenario.model {
        ChannelModel::Rayleigh => Ok(ScenarioChannel {
            h: rayleigh_channel(scenario.n_t, scenario.users, seed)?,
            azimuths_deg: Vec::new(),
        }),
        ChannelModel::Onering => {
            if scenario.n_t == 0 || scenario.users == 0 {
                return Err(Error::invalid("channel dimensions must be at least 1"));
            }
            if scenario.cluster_centers_deg.is_empty() {
                return Err(Error::Config("one-ring model needs at least one cluster".into()));
            }
            let mut angle_rng = stream(seed, Purpose::Azimuth, 0);
            let d = scenario.cluster_delta_deg;
            let azimuths_deg: Vec<f64> = (0..scenario.users)
                .map(|k| {
                    let c = scenario.cluster_centers_deg[scenario.cluster_of(k)];
                    if d > 0.0 {
                        angle_rng.random_range(c - d..=c + d)
                    } else {
                        c
                    }
                })
                .collect();
            let mut h = CMatrix::zeros(scenario.n_t, scenario.users);
            for (k, az) in azimuths_deg.iter().enumerate() {
                let r = one_ring_correlation(&OneRingSpec {
                    azimuth: az.to_radians(),
                    spread: scenario.spread_deg.to_radians(),
                    n_t: scenario.n_t,
                })?;
                let mut rng = stream(seed, Purpose::Channel, k as u64);
                h.set_column(k, &correlated_channel(&r, &mut rng)?);
            }
            Ok(ScenarioChannel { h, azimuths_deg })
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryRow {
    row: usize,
    col: usize,
    re: f64,
    im: f64,
}

/// Writes `(row, col, re, im)` records. Values use the shortest decimal
/// representation that round-trips exactly.
pub fn write_channel_csv<W: Write>(h: &CMatrix, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for col in 0..h.ncols() {
        for row in 0..h.nrows() {
            let v = h[(row, col)];
            w.serialize(EntryRow { row, col, re: v.re, im: v.im })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_channel_csv<R: Read>(reader: R) -> Result<CMatrix> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(reader).deserialize() {
        let rec: EntryRow = rec?;
        rows.push(rec);
    }
    let n_t = rows.iter().map(|r| r.row + 1).max().unwrap_or(0);
    let k = rows.iter().map(|r| r.col + 1).max().unwrap_or(0);
    if rows.len() != n_t * k || n_t == 0 {
        return Err(Error::invalid("channel CSV does not describe a full matrix"));
    }
    let mut h = CMatrix::zeros(n_t, k);
    for r in rows {
        h[(r.row, r.col)] = Complex64::new(r.re, r.im);
    }
    Ok(h)
}
