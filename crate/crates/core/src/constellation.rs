//! PSK constellations, symbol-vector indexing, detection, and the
//! constructive-interference margin.
//!
//! Symbols are carried as point indices. The point with index `i` sits at
//! angle `2πi/Ω`, so the first point is `1 + 0j`. A symbol vector for `k`
//! users is numbered by its base-Ω digit expansion with the last user as the
//! least significant digit.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::{CVector, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    order: usize,
    points: Vec<Complex64>,
    half_angle: f64,
}

impl Constellation {
    /// Ω-PSK with `order` points on the unit circle.
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(Error::invalid(format!("PSK order must be >= 2, got {order}")));
        }
        let points = (0..order)
            .map(|i| Complex64::from_polar(1.0, 2.0 * PI * i as f64 / order as f64))
            .collect();
        Ok(Self {
            order,
            points,
            half_angle: PI / order as f64,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Half of the angular width of a decision sector, `π/Ω`.
    pub fn half_angle(&self) -> f64 {
        self.half_angle
    }

    pub fn tan_half_angle(&self) -> f64 {
        self.half_angle.tan()
    }

    /// Index of `-point(i)`. Only meaningful for even orders.
    pub fn negated_index(&self, index: usize) -> usize {
        debug_assert!(self.order.is_multiple_of(2));
        (index + self.order / 2) % self.order
    }

    /// Minimum-angle-distance detection. Samples on a sector boundary go to
    /// the lower of the two indices; `y = 0` maps to index 0.
    pub fn detect(&self, y: Complex64) -> usize {
        if y == Complex64::new(0.0, 0.0) {
            return 0;
        }
        let theta = self.half_angle;
        let angle = y.im.atan2(y.re);
        // sector 0 is closed on both sides
        if angle.abs() <= theta {
            return 0;
        }
        let angle = if angle < 0.0 { angle + 2.0 * PI } else { angle };
        let idx = ((angle - theta) / (2.0 * theta)).ceil() as usize;
        idx % self.order
    }

    /// Complex values of a symbol vector.
    pub fn symbols(&self, indices: &[usize]) -> CVector {
        CVector::from_iterator(indices.len(), indices.iter().map(|&i| self.points[i]))
    }
}

/// Number of distinct symbol vectors `Ω^k`, saturating at `u128::MAX`.
pub fn symbol_vector_count(order: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, _| acc.saturating_mul(order as u128))
}

/// Symbol vector with the given index; the last entry is the least
/// significant base-Ω digit.
pub fn symbol_vector(index: usize, order: usize, k: usize) -> Vec<usize> {
    let mut out = vec![0; k];
    let mut rest = index;
    for slot in out.iter_mut().rev() {
        *slot = rest % order;
        rest /= order;
    }
    out
}

/// Inverse of [`symbol_vector`].
pub fn symbol_vector_index(entries: &[usize], order: usize) -> usize {
    entries.iter().fold(0, |acc, &d| acc * order + d)
}

/// All `Ω^k` symbol vectors in index order.
pub fn enumerate_symbol_vectors(
    constellation: &Constellation,
    k: usize,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    if k == 0 {
        return Err(Error::invalid("symbol vectors need at least one user"));
    }
    let count = symbol_vector_count(constellation.order(), k);
    if count > cap as u128 {
        return Err(Error::Capacity { count, cap });
    }
    Ok((0..count as usize)
        .map(|m| symbol_vector(m, constellation.order(), k))
        .collect())
}

/// Largest `t` for which `x` keeps `h^H x` inside the constructive region of
/// symbol `s`: `Re{z} - |Im{z}| / tan θ` with `z = h^H x e^{-j∠s}`.
pub fn ci_margin(h: &CVector, x: &CVector, s: Complex64, tan_theta: f64) -> f64 {
    let z = h.dotc(x) * (s.conj() / s.norm());
    z.re - z.im.abs() / tan_theta
}
