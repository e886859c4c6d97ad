//! Adaptive Dormand–Prince 5(4) integrator for small fixed-size systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn new(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_step: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }

    pub fn with_max_step(mut self, max_step: f64) -> Self {
        self.max_step = max_step;
        self
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Difference between the 5th- and embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(t, y)` from `t0` to `t_end`, calling `observer` at `t0`
/// and after every accepted step. The final step lands on `t_end` exactly.
pub fn dopri5<const D: usize, F, O>(
    f: F,
    t0: f64,
    y0: [f64; D],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<[f64; D]>
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
    O: FnMut(f64, &[f64; D]),
{
    let span = t_end - t0;
    observer(t0, &y0);
    if span == 0.0 {
        return Ok(y0);
    }
    if !(span > 0.0) {
        return Err(Error::invalid("integration interval must be increasing"));
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&f, t, &y, &k1, opts).min(opts.max_step).min(span);
    let min_step = 1e-14 * span.max(t0.abs());
    let mut steps = 0usize;

    while t < t_end {
        if steps >= opts.max_steps {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let mut k = [[0.0; D]; 7];
        k[0] = k1;
        for s in 1..7 {
            let mut ys = y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for d in 0..D {
                        ys[d] += h * a * kj[d];
                    }
                }
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        // Stage 7 is evaluated at the 5th-order solution (FSAL).
        let mut y_new = y;
        for d in 0..D {
            let mut acc = 0.0;
            for s in 0..6 {
                acc += A[6][s] * k[s][d];
            }
            y_new[d] += h * acc;
        }
        let mut err = 0.0;
        for d in 0..D {
            let mut e = 0.0;
            for s in 0..7 {
                e += E[s] * k[s][d];
            }
            let scale = opts.atol + opts.rtol * y[d].abs().max(y_new[d].abs());
            let r = h * e / scale;
            err += r * r;
        }
        let err = (err / D as f64).sqrt();
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            h *= 0.25;
            if h < min_step {
                return Err(Error::StepUnderflow { time: t, step: h });
            }
            continue;
        }
        steps += 1;
        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k[6];
            observer(t, &y);
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = (h * factor).min(opts.max_step);
        if h < min_step && t < t_end {
            return Err(Error::StepUnderflow { time: t, step: h });
        }
    }
    Ok(y)
}

fn initial_step<const D: usize, F>(f: &F, t: f64, y: &[f64; D], k1: &[f64; D], opts: &OdeOptions) -> f64
where
    F: Fn(f64, &[f64; D]) -> [f64; D],
{
    let scale = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let rms = |v: &[f64; D]| {
        (v.iter()
            .enumerate()
            .map(|(i, x)| (x / scale(i)).powi(2))
            .sum::<f64>()
            / D as f64)
            .sqrt()
    };
    let d0 = rms(y);
    let d1 = rms(k1);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let mut y1 = *y;
    for i in 0..D {
        y1[i] += h0 * k1[i];
    }
    let k2 = f(t + h0, &y1);
    let mut diff = [0.0; D];
    for i in 0..D {
        diff[i] = k2[i] - k1[i];
    }
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}
