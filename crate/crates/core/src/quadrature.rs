//! Quadrature rules shared by the solvers.

use crate::error::{Error, Result};

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Composite five-point Gauss–Legendre rule on `panels` equal panels.
pub fn composite_gauss<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for k in 0..panels {
        let mid = a + (k as f64 + 0.5) * h;
        let mut panel = 0.0;
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            panel += w * f(mid + 0.5 * h * x);
        }
        sum += 0.5 * h * panel;
    }
    sum
}

/// Composite Gauss with panel doubling until two successive estimates agree
/// to `rel_tol`. Starts at `panels` and doubles at most `max_doublings` times.
pub fn refined_gauss<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panels: usize,
    rel_tol: f64,
    max_doublings: usize,
) -> Result<f64> {
    let mut n = panels.max(1);
    let mut prev = composite_gauss(&f, a, b, n);
    for _ in 0..max_doublings {
        n *= 2;
        let next = composite_gauss(&f, a, b, n);
        if !next.is_finite() {
            return Err(Error::Quadrature {
                previous: prev,
                last: next,
            });
        }
        if (next - prev).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature {
        previous: prev,
        last: composite_gauss(&f, a, b, n),
    })
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_47,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = GK_WEIGHTS_K[7] * fc;
    let mut gauss = GK_WEIGHTS_G[3] * fc;
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kron += GK_WEIGHTS_K[i] * pair;
        if i % 2 == 1 {
            gauss += GK_WEIGHTS_G[i / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod (7/15) with recursive bisection.
pub fn adaptive_gk<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    let (whole, err) = gk15(&f, a, b);
    let tol = abs_tol.max(rel_tol * whole.abs());
    let mut stack = vec![(a, b, whole, err, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, est, err, depth)) = stack.pop() {
        let share = tol * (hi - lo) / (b - a);
        if err <= share.max(50.0 * f64::EPSILON * est.abs()) {
            total += est;
            continue;
        }
        if depth >= 60 {
            return Err(Error::Quadrature {
                previous: est - err,
                last: est,
            });
        }
        let mid = 0.5 * (lo + hi);
        let (l, le) = gk15(&f, lo, mid);
        let (r, re) = gk15(&f, mid, hi);
        stack.push((lo, mid, l, le, depth + 1));
        stack.push((mid, hi, r, re, depth + 1));
    }
    Ok(total)
}

/// Composite Simpson weights for `intervals` (even) equal intervals of width `h`.
pub fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    assert!(
        intervals >= 2 && intervals.is_multiple_of(2),
        "Simpson needs an even interval count"
    );
    let mut w = vec![0.0; intervals + 1];
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == 0 || i == intervals {
            h / 3.0
        } else if i % 2 == 1 {
            4.0 * h / 3.0
        } else {
            2.0 * h / 3.0
        };
    }
    w
}

/// Composite Simpson on equally spaced samples; falls back to a trapezoid on
/// the last interval when the count of intervals is odd.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut sum = 0.0;
    if even >= 2 {
        let w = simpson_weights(even, h);
        sum += w.iter().zip(values).map(|(w, v)| w * v).sum::<f64>();
    }
    if intervals % 2 == 1 {
        sum += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_is_exact_for_degree_nine() {
        let v = composite_gauss(|x| x.powi(9) + 3.0 * x.powi(4), 0.0, 2.0, 1);
        let exact = 2f64.powi(10) / 10.0 + 3.0 * 2f64.powi(5) / 5.0;
        assert!((v - exact).abs() < 1e-11 * exact);
    }

    #[test]
    fn adaptive_handles_peaked_integrand() {
        let v = adaptive_gk(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((v - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn simpson_weights_sum_to_length() {
        let w = simpson_weights(8, 0.25);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        let cubic: Vec<f64> = (0..=8).map(|i| (i as f64 * 0.25).powi(3)).collect();
        assert!((simpson(&cubic, 0.25) - 4.0).abs() < 1e-13);
    }

    #[test]
    fn refined_gauss_reports_both_estimates_on_failure() {
        let err = refined_gauss(|x| (1e6 * x).sin() / x.max(1e-300), 0.0, 1.0, 1, 1e-15, 1);
        assert!(matches!(err, Err(Error::Quadrature { .. })));
    }
}
