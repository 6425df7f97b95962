//! Adaptive Dormand–Prince 5(4) for small fixed-size systems.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
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
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

/// Integrates `y' = rhs(t, y)` from `t0` through each of the increasing
/// `stops`, calling `visit(t, y)` on arrival at every stop. Steps are clipped
/// so every stop is hit exactly. `visit` may return `false` to end early.
pub fn dopri5<const N: usize, F, V>(
    mut rhs: F,
    t0: f64,
    y0: [f64; N],
    stops: &[f64],
    tol: Tolerance,
    h_max: f64,
    mut visit: V,
) -> Result<([f64; N], StepStats)>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    V: FnMut(f64, &[f64; N]) -> bool,
{
    let mut stats = StepStats::default();
    let mut t = t0;
    let mut y = y0;
    let Some(&t_end) = stops.last() else {
        return Ok((y, stats));
    };
    let mut k = [[0.0; N]; 7];
    k[0] = rhs(t, &y);
    let mut h = initial_step(&k[0], &y, tol, t_end - t0).min(h_max);
    let mut stop_idx = 0;
    while stop_idx < stops.len() && stops[stop_idx] <= t {
        if !visit(t, &y) {
            return Ok((y, stats));
        }
        stop_idx += 1;
    }
    let mut fac_old = 1e-4f64;
    while stop_idx < stops.len() {
        let target = stops[stop_idx];
        let mut hit = false;
        if t + h >= target || t + 1.01 * h >= target {
            h = target - t;
            hit = true;
        }
        if !hit && h <= 4.0 * f64::EPSILON * t.abs() {
            return Err(Error::Integration {
                at: t,
                reason: "step size underflow".into(),
            });
        }
        for s in 1..7 {
            let mut ys = y;
            for (i, yi) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][i];
                }
                *yi += h * acc;
            }
            k[s] = rhs(t + C[s] * h, &ys);
        }
        let mut y_new = y;
        let mut err = 0.0f64;
        for i in 0..N {
            let mut acc = 0.0;
            let mut eacc = 0.0;
            for s in 0..6 {
                acc += A[6][s] * k[s][i];
            }
            for s in 0..7 {
                eacc += E[s] * k[s][i];
            }
            y_new[i] = y[i] + h * acc;
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((h * eacc / sc).abs());
        }
        if !err.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            stats.accepted += 1;
            // y_new used k[6] = f(t+h, y_new) for the error estimate: FSAL.
            k[0] = k[6];
            t = if hit { target } else { t + h };
            y = y_new;
            let fac = (0.9 * err.max(1e-10).powf(-0.17) * fac_old.powf(0.04)).clamp(0.2, 10.0);
            fac_old = err.max(1e-4);
            let h_next = (h * fac).min(h_max);
            if hit {
                if !visit(t, &y) {
                    return Ok((y, stats));
                }
                stop_idx += 1;
            }
            h = h_next.max(1e-300);
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok((y, stats))
}

fn initial_step<const N: usize>(f0: &[f64; N], y0: &[f64; N], tol: Tolerance, span: f64) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..N {
        let sc = tol.atol + tol.rtol * y0[i].abs();
        d0 = d0.max((y0[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span.abs()).max(1e-12 * span.abs())
}
