//! Independent closed-form and brute-force references for tests.
#![allow(dead_code)]

use std::f64::consts::TAU;

use num_complex::Complex64;

/// Phasor current of a series RLC loop driven by EMF `e_amp·cos(ωt)`.
pub fn series_rlc_current(e_amp: f64, f: f64, l: f64, c: f64, r: f64) -> Complex64 {
    let w = TAU * f;
    Complex64::new(e_amp, 0.0) / Complex64::new(r, w * l - 1.0 / (w * c))
}

/// Fundamental amplitude and phase (rad, relative to `sin(ωt)` with
/// `t = k·dt`) over the last `cycles` whole periods of `samples`.
pub fn steady_fundamental(samples: &[f64], dt: f64, f: f64, cycles: usize) -> (f64, f64) {
    let per = 1.0 / (f * dt);
    let n = (cycles as f64 * per).round() as usize;
    let start = samples.len() - n;
    let (mut s, mut c) = (0.0, 0.0);
    for (k, x) in samples.iter().enumerate().skip(start) {
        let ph = TAU * f * k as f64 * dt;
        s += x * ph.sin();
        c += x * ph.cos();
    }
    let s = 2.0 * s / n as f64;
    let c = 2.0 * c / n as f64;
    (s.hypot(c), c.atan2(s))
}

/// Plain bisection for a sign change of `g` on `[lo, hi]`.
pub fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let glo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Energy-balance form of the equivalent capacitance condition: with the
/// switch closed for the centre `t_on` of each half cycle, the capacitor
/// voltage swing per half cycle is `∫|i|/C` piecewise. Returns the swing
/// divided by the swing of an ideal capacitor `c_ideal`, minus one.
pub fn swing_mismatch(t_off: f64, f: f64, c1: f64, c2: f64, c_ideal: f64) -> f64 {
    // current cos(ωt) over a half cycle [-T/4, T/4]; open near the edges
    let w = TAU * f;
    let half_off = 0.5 * t_off;
    let edge = 0.25 / f - half_off;
    let n = 20_000;
    let mut swing = 0.0;
    let a = -0.25 / f;
    let h = 0.5 / f / n as f64;
    for k in 0..n {
        let t = a + (k as f64 + 0.5) * h;
        let c = if t.abs() < edge { c1 + c2 } else { c1 };
        swing += (w * t).cos() * h / c;
    }
    let ideal = 2.0 / (w * c_ideal);
    swing / ideal - 1.0
}
