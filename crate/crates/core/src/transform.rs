//! The real-valued linear constraint system of one group design problem.
//!
//! For group channels `H_g` rotated by their symbols and the out-of-group
//! channels `H_c`, the constructive-interference and interference-tolerance
//! constraints read `A x̃ + t c1 - √I c2 ≤ 0` with `x̃ = [Re x; Im x]`. The
//! rows of `A` are stacked as
//!
//! ```text
//! [ H̃ᵀ∇ - tanθ H̃ᵀ ]   CI, positive imaginary side      (K_g rows)
//! [-H̃ᵀ∇ - tanθ H̃ᵀ ]   CI, negative imaginary side      (K_g rows)
//! [ H̃cᵀ           ]   Re of leakage, upper              (K - K_g rows)
//! [-H̃cᵀ           ]   Re of leakage, lower
//! [ H̃cᵀ∇          ]   Im of leakage, upper
//! [-H̃cᵀ∇          ]   Im of leakage, lower
//! ```
//!
//! where a real column of `H̃` is `[Re h; Im h]` and `∇ = [[0, I], [-I, 0]]`,
//! so that `H̃ᵀx̃ = Re{hᴴx}` and `H̃ᵀ∇x̃ = Im{hᴴx}`.

use num_complex::Complex64;

use crate::linalg::{max_symmetric_eigenvalue, power_iteration};
use crate::{CMatrix, Error, Result, RMatrix, RVector};

/// Above this row count λ_max comes from power iteration.
const DENSE_EIGEN_LIMIT: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct RealProblem {
    pub a: RMatrix,
    pub c1: RVector,
    pub c2: RVector,
    /// `A Aᵀ`.
    pub v: RMatrix,
    pub lambda_max: f64,
    pub tan_theta: f64,
    pub users: usize,
    pub group_users: usize,
    pub n_t: usize,
}

impl RealProblem {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// Number of CI rows, `2 K_g`.
    pub fn ci_rows(&self) -> usize {
        2 * self.group_users
    }

    /// `A x̃ + t c1 - √I c2`; feasibility means every entry is `≤ 0`.
    pub fn constraint_values(&self, x_tilde: &RVector, t: f64, i_tol: f64) -> RVector {
        let sqrt_i = i_tol.sqrt();
        let mut g = &self.a * x_tilde;
        for (r, v) in g.iter_mut().enumerate() {
            *v += t * self.c1[r] - sqrt_i * self.c2[r];
        }
        g
    }
}

/// `∇ x̃` for the `[Re; Im]` stacking: `[Im x; -Re x]`.
pub fn apply_nabla(x: &RVector) -> RVector {
    let n = x.len() / 2;
    RVector::from_fn(x.len(), |i, _| if i < n { x[i + n] } else { -x[i - n] })
}

fn push_row(a: &mut RMatrix, row: usize, h: impl Iterator<Item = Complex64>, n: usize, tan: f64, kind: RowKind) {
    // For a real column r = [Re h; Im h]: rᵀ∇ = [-Im h, Re h] as a row.
    for (i, hi) in h.enumerate() {
        let (re_part, im_part) = match kind {
            RowKind::Ci(sign) => (-sign * hi.im - tan * hi.re, sign * hi.re - tan * hi.im),
            RowKind::Re(sign) => (sign * hi.re, sign * hi.im),
            RowKind::Im(sign) => (-sign * hi.im, sign * hi.re),
        };
        a[(row, i)] = re_part;
        a[(row, i + n)] = im_part;
    }
}

#[derive(Clone, Copy)]
enum RowKind {
    Ci(f64),
    Re(f64),
    Im(f64),
}

/// Builds the constraint system for group channels `h_g` (one column per
/// group user, in symbol order), the out-of-group channels `h_c` (possibly
/// zero columns) and the group's symbols.
pub fn build_real_problem(
    h_g: &CMatrix,
    h_c: &CMatrix,
    symbols: &[Complex64],
    tan_theta: f64,
) -> Result<RealProblem> {
    let n = h_g.nrows();
    let kg = h_g.ncols();
    if kg == 0 || symbols.len() != kg {
        return Err(Error::invalid(format!(
            "group has {kg} channels but {} symbols",
            symbols.len()
        )));
    }
    if h_c.ncols() > 0 && h_c.nrows() != n {
        return Err(Error::invalid("group and complement channels differ in antenna count"));
    }
    if !(tan_theta > 0.0) {
        return Err(Error::invalid("tan θ must be positive"));
    }
    let kc = h_c.ncols();
    let rows = 2 * kg + 4 * kc;
    let mut a = RMatrix::zeros(rows, 2 * n);
    for (k, s) in symbols.iter().enumerate() {
        let phase = s / s.norm();
        let rotated = h_g.column(k).into_iter().map(move |h| h * phase).collect::<Vec<_>>();
        push_row(&mut a, k, rotated.iter().copied(), n, tan_theta, RowKind::Ci(1.0));
        push_row(&mut a, kg + k, rotated.iter().copied(), n, tan_theta, RowKind::Ci(-1.0));
    }
    for k in 0..kc {
        let col = h_c.column(k);
        let base = 2 * kg;
        push_row(&mut a, base + k, col.iter().copied(), n, tan_theta, RowKind::Re(1.0));
        push_row(&mut a, base + kc + k, col.iter().copied(), n, tan_theta, RowKind::Re(-1.0));
        push_row(&mut a, base + 2 * kc + k, col.iter().copied(), n, tan_theta, RowKind::Im(1.0));
        push_row(&mut a, base + 3 * kc + k, col.iter().copied(), n, tan_theta, RowKind::Im(-1.0));
    }
    let c1 = RVector::from_fn(rows, |i, _| if i < 2 * kg { tan_theta } else { 0.0 });
    let c2 = RVector::from_fn(rows, |i, _| if i < 2 * kg { 0.0 } else { 1.0 });
    let (v, lambda_max) = spectral_bound(&a);
    Ok(RealProblem {
        a,
        c1,
        c2,
        v,
        lambda_max,
        tan_theta,
        users: kg + kc,
        group_users: kg,
        n_t: n,
    })
}

/// `V = A Aᵀ` and its largest eigenvalue.
pub fn spectral_bound(a: &RMatrix) -> (RMatrix, f64) {
    let v = a * a.transpose();
    let lambda = if v.nrows() > DENSE_EIGEN_LIMIT {
        power_iteration(&v, 1e-10, 1_000_000)
    } else {
        max_symmetric_eigenvalue(&v)
    };
    (v, lambda.max(0.0))
}
