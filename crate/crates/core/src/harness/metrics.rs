//! Trace-only metrics: envelopes, lock times, powers and phase.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use crate::design::wrap_deg;
use crate::error::{Error, Result};
use crate::sim::{ControllerMode, ReceiverKind, Trace};

/// Fundamental amplitude and phase (rad) of `x` at frequency `f` over the
/// largest whole number of periods in the slice. Phase is relative to
/// `sin(2πf t)` with `t = t0 + k·dt`.
pub fn fundamental(x: &[f64], dt: f64, t0: f64, f: f64) -> Result<(f64, f64)> {
    if !(f > 0.0 && dt > 0.0) {
        return Err(Error::Domain("frequency and spacing must be > 0".into()));
    }
    let periods = (x.len() as f64 * dt * f).floor();
    if periods < 1.0 {
        return Err(Error::Domain(format!(
            "window of {:e} s shorter than one period at {f:.0} Hz",
            x.len() as f64 * dt
        )));
    }
    let n = ((periods / (f * dt)).round() as usize).min(x.len());
    let (mut s, mut c) = (0.0, 0.0);
    for (k, v) in x[..n].iter().enumerate() {
        let ph = TAU * f * (t0 + k as f64 * dt);
        s += v * ph.sin();
        c += v * ph.cos();
    }
    let s = 2.0 * s / n as f64;
    let c = 2.0 * c / n as f64;
    Ok((s.hypot(c), c.atan2(s)))
}

/// Phase of `a` minus phase of `b` in degrees, in (-180, 180].
pub fn phase_between_samples(a: &[f64], b: &[f64], dt: f64, t0: f64, f: f64) -> Result<f64> {
    let (amp_a, pa) = fundamental(a, dt, t0, f)?;
    let (amp_b, pb) = fundamental(b, dt, t0, f)?;
    let scale = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amp_a <= 1e-9 * scale(a).max(f64::MIN_POSITIVE) || amp_b <= 1e-9 * scale(b).max(f64::MIN_POSITIVE) {
        return Err(Error::UndefinedPhase("signal has no fundamental component".into()));
    }
    Ok(wrap_deg((pa - pb).to_degrees()))
}

/// Phase between two named trace columns over `[t0, t1)`, at the
/// transmitter frequency active at `t0`.
pub fn phase_between(trace: &Trace, sig_a: &str, sig_b: &str, window: (f64, f64)) -> Result<f64> {
    let (i0, i1) = window_indices(trace, window)?;
    let a = column(trace, sig_a)?;
    let b = column(trace, sig_b)?;
    let f = trace.f_t_active[i0];
    if f <= 0.0 {
        return Err(Error::UndefinedPhase("no transmitter frequency in window".into()));
    }
    phase_between_samples(&a[i0..i1], &b[i0..i1], trace.sample_dt, trace.t[i0], f)
}

/// Look up a column by its CSV name.
pub fn column<'a>(trace: &'a Trace, name: &str) -> Result<&'a [f64]> {
    match name {
        "i_t" => return Ok(&trace.i_t),
        "t" => return Ok(&trace.t),
        "f_t_active" => return Ok(&trace.f_t_active),
        _ => {}
    }
    let (rx, field) = name
        .split_once('.')
        .ok_or_else(|| Error::Domain(format!("unknown signal '{name}'")))?;
    let r = trace
        .receiver(rx)
        .ok_or_else(|| Error::Domain(format!("unknown receiver '{rx}'")))?;
    Ok(match field {
        "i_r" => &r.i_r,
        "v_c1" => &r.v_c1,
        "v_c2" => &r.v_c2,
        "v_load" => &r.v_load,
        "e_switch" => &r.e_switch,
        _ => return Err(Error::Domain(format!("unknown signal '{name}'"))),
    })
}

fn window_indices(trace: &Trace, (t0, t1): (f64, f64)) -> Result<(usize, usize)> {
    if !(t1 > t0) {
        return Err(Error::Domain("empty window".into()));
    }
    let i0 = trace.index_at(t0);
    let i1 = trace.index_at(t1).min(trace.len());
    if i1 <= i0 + 1 {
        return Err(Error::Domain("window holds fewer than two samples".into()));
    }
    Ok((i0, i1))
}

/// Peak |x| in consecutive half-period bins starting at `t_start`.
/// Returns (time of the peak, peak) per complete bin.
pub fn half_period_envelope(t: &[f64], x: &[f64], t_start: f64, t_end: f64, f: f64) -> Vec<(f64, f64)> {
    let half = 0.5 / f;
    let mut out = Vec::new();
    let mut i = t.partition_point(|&v| v < t_start);
    let mut k = 0u64;
    loop {
        let b0 = t_start + k as f64 * half;
        let b1 = b0 + half;
        if b1 > t_end + 1e-15 {
            break;
        }
        let mut best = (b0, 0.0f64);
        let mut any = false;
        while i < t.len() && t[i] < b1 {
            if x[i].abs() > best.1 || !any {
                best = (t[i], x[i].abs());
                any = true;
            }
            i += 1;
        }
        if !any {
            break;
        }
        out.push(best);
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LockTime {
    Locked { seconds: f64, cycles: f64 },
    NotLocked,
}

impl LockTime {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            LockTime::Locked { seconds, .. } => Some(*seconds),
            LockTime::NotLocked => None,
        }
    }

    pub fn cycles(&self) -> Option<f64> {
        match self {
            LockTime::Locked { cycles, .. } => Some(*cycles),
            LockTime::NotLocked => None,
        }
    }
}

/// Consecutive half periods the envelope must hold inside the band.
pub const LOCK_HOLD_HALF_PERIODS: usize = 3;

/// Steady-state window of a dwell: its last 20%, trimmed to whole periods.
pub fn steady_window(t_hop: f64, t_end: f64, f: f64) -> (f64, f64) {
    let len = 0.2 * (t_end - t_hop);
    let periods = (len * f).floor().max(1.0);
    (t_end - periods / f, t_end)
}

/// Time from `hop_instant` until the receiver's current envelope enters
/// `[threshold, 2 - threshold] ×` its steady value and holds there for
/// three half periods. The dwell ends at `dwell_end`.
pub fn lock_time(trace: &Trace, receiver: &str, hop_instant: f64, dwell_end: f64, threshold: f64) -> Result<LockTime> {
    if hop_instant < trace.t[0] || hop_instant >= *trace.t.last().unwrap_or(&0.0) {
        return Err(Error::Domain("hop instant outside trace".into()));
    }
    let i_h = trace.index_at(hop_instant);
    let f = trace.f_t_active[i_h.min(trace.len() - 1)];
    if f <= 0.0 {
        return Ok(LockTime::NotLocked);
    }
    let r = trace
        .receiver(receiver)
        .ok_or_else(|| Error::Domain(format!("unknown receiver '{receiver}'")))?;
    let (s0, s1) = steady_window(hop_instant, dwell_end, f);
    if let (Some(ct), ReceiverKind::Switched) = (trace.controller.as_ref(), r.kind) {
        let (j0, j1) = (trace.index_at(s0), trace.index_at(s1).min(trace.len()));
        let engaged = ct.mode[j0..j1].iter().all(|m| *m == Some(ControllerMode::Engage));
        if !engaged || j1 <= j0 {
            return Ok(LockTime::NotLocked);
        }
    }
    let env = half_period_envelope(&trace.t, &r.i_r, hop_instant, dwell_end, f);
    let steady: Vec<f64> = env.iter().filter(|(t, _)| *t >= s0).map(|e| e.1).collect();
    if steady.is_empty() {
        return Err(Error::Domain("dwell too short for a steady-state window".into()));
    }
    let ss = steady.iter().sum::<f64>() / steady.len() as f64;
    if ss <= 0.0 {
        return Ok(LockTime::NotLocked);
    }
    let lo = threshold * ss;
    let hi = (2.0 - threshold) * ss;
    let inside: Vec<bool> = env.iter().map(|(_, p)| *p >= lo && *p <= hi).collect();
    for k in 0..inside.len().saturating_sub(LOCK_HOLD_HALF_PERIODS - 1) {
        if inside[k..k + LOCK_HOLD_HALF_PERIODS].iter().all(|&b| b) {
            let seconds = (env[k].0 - hop_instant).max(0.0);
            return Ok(LockTime::Locked {
                seconds,
                cycles: seconds * f,
            });
        }
    }
    Ok(LockTime::NotLocked)
}

/// Mean load power of a receiver over a whole number of periods from `window.0`.
pub fn steady_state_power(trace: &Trace, receiver: &str, window: (f64, f64)) -> Result<f64> {
    let (i0, i1) = window_indices(trace, window)?;
    let f = trace.f_t_active[i0];
    let span = window.1 - window.0;
    if f <= 0.0 {
        return power_mean(trace, receiver, i0, i1);
    }
    if span * f < 1.0 - 1e-9 {
        return Err(Error::Domain(format!(
            "window {span:e} s shorter than one period at {f:.0} Hz"
        )));
    }
    let periods = (span * f + 1e-9).floor();
    let n = ((periods / (f * trace.sample_dt)).round() as usize).min(i1 - i0);
    power_mean(trace, receiver, i0, i0 + n)
}

fn power_mean(trace: &Trace, receiver: &str, i0: usize, i1: usize) -> Result<f64> {
    let r = trace
        .receiver(receiver)
        .ok_or_else(|| Error::Domain(format!("unknown receiver '{receiver}'")))?;
    let n = (i1 - i0).max(1);
    let p: f64 = r.i_r[i0..i1].iter().zip(&r.v_load[i0..i1]).map(|(i, v)| i * v).sum();
    Ok((p / n as f64).max(0.0))
}

/// Attacker power over the matched receiver's power.
pub fn stolen_ratio(p_attacker: f64, p_matched: f64) -> Option<f64> {
    (p_matched > 0.0).then(|| p_attacker / p_matched)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopMetrics {
    pub t_hop: f64,
    pub t_end: f64,
    pub freq: f64,
    pub lock: LockTime,
    /// Steady-state load power per receiver, trace order (W).
    pub powers: Vec<(String, f64)>,
    pub matched: Option<String>,
    pub stolen_ratio: Option<f64>,
    /// Attacker I_R phase relative to I_T minus 90° (degrees).
    pub phase_error_deg: Option<f64>,
    /// Mean switching loss over the steady window (W).
    pub switching_loss_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub hops: Vec<HopMetrics>,
    pub switching_loss_w: f64,
}

/// Instants where the transmitter frequency changes, with each dwell end.
pub fn dwells(trace: &Trace) -> Vec<(f64, f64, f64)> {
    let mut out = Vec::new();
    if trace.is_empty() {
        return out;
    }
    let end = *trace.t.last().unwrap();
    let mut start = 0usize;
    for k in 1..trace.len() {
        if trace.f_t_active[k] != trace.f_t_active[k - 1] {
            out.push((trace.t[start], trace.t[k], trace.f_t_active[start]));
            start = k;
        }
    }
    out.push((trace.t[start], end, trace.f_t_active[start]));
    out.retain(|d| d.2 > 0.0 && d.1 > d.0);
    out
}

/// Recompute all metrics from a trace.
pub fn analyze(trace: &Trace) -> Result<Metrics> {
    if trace.len() < 2 {
        return Err(Error::InsufficientData("trace has fewer than two samples".into()));
    }
    let attacker = trace.attacker().map(|r| r.name.clone());
    let lock_rx = attacker.clone().or_else(|| trace.receivers.first().map(|r| r.name.clone()));
    let mut hops = Vec::new();
    for (t_hop, t_end, f) in dwells(trace) {
        let win = steady_window(t_hop, t_end, f);
        if win.0 < t_hop {
            continue;
        }
        let lock = match &lock_rx {
            Some(name) => lock_time(trace, name, t_hop, t_end, 0.9)?,
            None => LockTime::NotLocked,
        };
        let mut powers = Vec::new();
        for r in &trace.receivers {
            powers.push((r.name.clone(), steady_state_power(trace, &r.name, win)?));
        }
        let matched = trace
            .receivers
            .iter()
            .zip(&powers)
            .filter(|(r, _)| r.kind == ReceiverKind::Fixed)
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(r, p)| (r.name.clone(), p.1));
        let p_att = attacker
            .as_ref()
            .and_then(|a| powers.iter().find(|(n, _)| n == a).map(|p| p.1));
        let stolen = match (p_att, &matched) {
            (Some(pa), Some((_, pm))) => stolen_ratio(pa, *pm),
            _ => None,
        };
        let phase_error_deg = attacker.as_ref().and_then(|a| {
            phase_between(trace, &format!("{a}.i_r"), "i_t", win)
                .ok()
                .map(|p| p - 90.0)
        });
        let switching_loss_w = trace.attacker().map_or(0.0, |r| {
            let (i0, i1) = (trace.index_at(win.0), trace.index_at(win.1).min(trace.len() - 1));
            (r.e_switch[i1] - r.e_switch[i0]) / (trace.t[i1] - trace.t[i0]).max(f64::MIN_POSITIVE)
        });
        hops.push(HopMetrics {
            t_hop,
            t_end,
            freq: f,
            lock,
            powers,
            matched: matched.map(|m| m.0),
            stolen_ratio: stolen,
            phase_error_deg,
            switching_loss_w,
        });
    }
    let switching_loss_w = trace.attacker().map_or(0.0, |r| {
        let span = trace.t.last().unwrap() - trace.t[0];
        r.e_switch.last().unwrap_or(&0.0) / span
    });
    Ok(Metrics {
        hops,
        switching_loss_w,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:e}"))
}

/// One row per dwell.
pub fn metrics_csv(m: &Metrics) -> String {
    let names: Vec<String> = m
        .hops
        .first()
        .map(|h| h.powers.iter().map(|p| p.0.clone()).collect())
        .unwrap_or_default();
    let mut s = String::from("hop,t_hop_s,freq_hz,locked,lock_time_s,lock_time_cycles");
    for n in &names {
        let _ = write!(s, ",p_{n}_w");
    }
    s.push_str(",matched,stolen_ratio,phase_error_deg,switching_loss_w\n");
    for (k, h) in m.hops.iter().enumerate() {
        let _ = write!(
            s,
            "{k},{:e},{:e},{},{},{}",
            h.t_hop,
            h.freq,
            u8::from(h.lock.seconds().is_some()),
            opt(h.lock.seconds()),
            opt(h.lock.cycles())
        );
        for (_, p) in &h.powers {
            let _ = write!(s, ",{p:e}");
        }
        let _ = writeln!(
            s,
            ",{},{},{},{:e}",
            h.matched.as_deref().unwrap_or("NA"),
            opt(h.stolen_ratio),
            opt(h.phase_error_deg),
            h.switching_loss_w
        );
    }
    s
}
