//! Grid, quadrature, finite differences and small linear-algebra kernels
//! shared by the profile builder, the solver and the diagnostics.

use crate::error::{Error, Result};

/// Uniform nodes `x_i = i / n` on `[0, 1]`, `i = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    n: usize,
    x: Vec<f64>,
}

impl UniformGrid {
    pub fn new(n: usize) -> Self {
        let x = (0..=n).map(|i| i as f64 / n as f64).collect();
        Self { n, x }
    }

    /// Number of intervals.
    pub fn intervals(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    /// Cell midpoints `x_{i+1/2}`, `i = 0..n`.
    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (i as f64 + 0.5) / self.n as f64)
            .collect()
    }

    /// Exact moments `∫ x^k dx` over the dual cells `[x_{i-1/2}, x_{i+1/2}]`
    /// clipped to `[0, 1]`.
    pub fn cell_moments(&self, k: i32) -> Vec<f64> {
        let h = self.spacing();
        let kp = (k + 1) as f64;
        (0..=self.n)
            .map(|i| {
                let lo = (self.x[i] - 0.5 * h).max(0.0);
                let hi = (self.x[i] + 0.5 * h).min(1.0);
                (hi.powi(k + 1) - lo.powi(k + 1)) / kp
            })
            .collect()
    }

    /// `∫ x^k f(x) dx` over each dual cell, with `f` the piecewise-linear
    /// interpolant of the nodal values. Unlike `cell_moments(k)[i] * f[i]`
    /// this stays positive at a node where `f` vanishes but its neighbour
    /// does not.
    pub fn weighted_cell_moments(&self, k: i32, f: &[f64]) -> Vec<f64> {
        let h = self.spacing();
        let m = |a: f64, b: f64, p: i32| (b.powi(p + 1) - a.powi(p + 1)) / (p + 1) as f64;
        // ∫_a^b x^k f over a sub-interval of element [x_j, x_j+1].
        let piece = |j: usize, a: f64, b: f64| {
            let s = (f[j + 1] - f[j]) / h;
            f[j] * m(a, b, k) + s * (m(a, b, k + 1) - self.x[j] * m(a, b, k))
        };
        (0..=self.n)
            .map(|i| {
                let mut acc = 0.0;
                if i > 0 {
                    acc += piece(i - 1, self.x[i] - 0.5 * h, self.x[i]);
                }
                if i < self.n {
                    acc += piece(i, self.x[i], self.x[i] + 0.5 * h);
                }
                acc
            })
            .collect()
    }

    /// Index of the node equal to `x`, if `x` lies on the grid.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let s = x * self.n as f64;
        let i = s.round();
        if (s - i).abs() < 1e-9 && i >= 0.0 && i <= self.n as f64 {
            Some(i as usize)
        } else {
            None
        }
    }
}

/// Composite trapezoid rule on a uniform grid.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Trapezoid integral over nodes `lo..=hi`.
pub fn trapezoid_range(values: &[f64], h: f64, lo: usize, hi: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    trapezoid(&values[lo..=hi], h)
}

/// First derivative of a field that is even about `x = 0`: centered in the
/// interior, zero at the center, second-order one-sided at `x = 1`.
pub fn derivative_even(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h);
    d
}

/// Second derivative of an even field, same boundary closure as
/// [`derivative_even`].
pub fn second_derivative_even(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len() - 1;
    let h2 = h * h;
    let mut d = vec![0.0; n + 1];
    d[0] = 2.0 * (f[1] - f[0]) / h2;
    for i in 1..n {
        d[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    d[n] = (2.0 * f[n] - 5.0 * f[n - 1] + 4.0 * f[n - 2] - f[n - 3]) / h2;
    d
}

pub fn sup_abs(f: &[f64]) -> f64 {
    f.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Solves `A w = b` for the symmetric tridiagonal M-matrix
///
/// ```text
/// (A w)_i = d_i w_i + k_{i-1/2} (w_i - w_{i-1}) + k_{i+1/2} (w_i - w_{i+1})
/// ```
///
/// with zero flux through both ends (`k_{-1/2} = k_{n+1/2} = 0`).
/// `conductance[i]` is `k_{i+1/2}` (length `n`), `mass` is `d` (length
/// `n + 1`).
///
/// The stiffness part annihilates constants exactly, so when `k >> d` the
/// usual Thomas pivots `k + d - k^2 / (k + d)` cancel catastrophically. The
/// elimination here carries the small part of each pivot separately using
/// only additions and products of nonnegative numbers, which keeps the
/// constant mode accurate at any stiffness ratio.
pub fn solve_zero_flux_tridiagonal(
    conductance: &[f64],
    mass: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n1 = mass.len();
    if rhs.len() != n1 || conductance.len() + 1 != n1 {
        return Err(Error::LinearSolve(format!(
            "size mismatch: {} conductances, {} masses, {} rhs",
            conductance.len(),
            mass.len(),
            rhs.len()
        )));
    }
    if conductance.iter().chain(mass).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::LinearSolve(
            "coefficients must be finite and nonnegative".into(),
        ));
    }
    let k_right = |i: usize| if i + 1 < n1 { conductance[i] } else { 0.0 };

    let mut pivot = vec![0.0; n1];
    let mut b = vec![0.0; n1];
    let mut small = mass[0];
    pivot[0] = k_right(0) + small;
    b[0] = rhs[0];
    for i in 1..n1 {
        let kl = conductance[i - 1];
        let prev = pivot[i - 1];
        if !(prev > 0.0) {
            return Err(Error::LinearSolve(format!("zero pivot at row {}", i - 1)));
        }
        small = mass[i] + kl * (small / prev);
        pivot[i] = k_right(i) + small;
        b[i] = rhs[i] + kl * (b[i - 1] / prev);
    }
    if !(pivot[n1 - 1] > 0.0) {
        return Err(Error::LinearSolve(
            "singular system: no positive mass on any row".into(),
        ));
    }
    let mut w = vec![0.0; n1];
    w[n1 - 1] = b[n1 - 1] / pivot[n1 - 1];
    for i in (0..n1 - 1).rev() {
        w[i] = (b[i] + conductance[i] * w[i + 1]) / pivot[i];
    }
    Ok(w)
}

/// Least-squares line `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (xi, yi) in x.iter().zip(y) {
        let dx = xi - mx;
        let dy = yi - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    Some((intercept, slope, r2))
}

/// Cubic Hermite interpolation on `[t0, t1]` from values and slopes.
pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}
