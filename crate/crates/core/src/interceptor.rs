//! The intruder's switch controller: senses its own coil, estimates the
//! hopping frequency, looks up a duty and drives the switch.
//!
//! Modes run SENSE (switch open, waiting for an edge) → ESTIMATE (timing
//! upward edges over a window) → ENGAGE (switching, refining the estimate,
//! watching for distortion). The only signal read in the field is the
//! sensed voltage; the transmitter current tap is reserved for calibration.

use std::collections::VecDeque;

use crate::design::{
    achievable_band, max_t_on, ton_toff, wrap_deg, DutyTimes, EntryOrigin, FrequencyTableEntry, SenseMode,
};
use crate::error::{Error, Result};
use crate::plant::SystemParams;
use crate::sim::{
    detect_zero_cross, ControllerMode, EdgeEvent, EdgeKind, Hysteresis, Observation, SignalSource,
    SwitchController, Taps, Telemetry, ZeroCrossDetector,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub sense_mode: SenseMode,
    pub t_filter: f64,
    pub estimation_window: f64,
    pub adopt_radius: f64,
    /// Degrees.
    pub phase_tolerance: f64,
    pub trim_gain: f64,
    pub distortion_rel_tol: f64,
    pub distortion_count: u32,
    /// Off plays closed-form duties only (the unregulated baseline).
    pub regulation_enabled: bool,
    /// Comparator band as a fraction of the running signal peak.
    pub hysteresis_fraction: f64,
    /// Estimate drift (Hz) that triggers a new duty selection.
    pub refine_threshold: f64,
    /// Read the transmitter current and regulate phase live (calibration only).
    pub oracle_phase: bool,
    /// Fraction of each edge's phase error applied to the switch anchor in ENGAGE.
    pub anchor_gain: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            sense_mode: SenseMode::CapacitorVoltage,
            t_filter: 0.75e-6,
            estimation_window: 100e-6,
            adopt_radius: 1000.0,
            phase_tolerance: 2.0,
            trim_gain: 0.5,
            distortion_rel_tol: 0.3,
            distortion_count: 3,
            regulation_enabled: true,
            hysteresis_fraction: 0.02,
            refine_threshold: 200.0,
            oracle_phase: false,
            anchor_gain: 0.25,
        }
    }
}

impl ControllerConfig {
    /// Check ranges; `f_l` is the lowest frequency the window must cover.
    pub fn validate(&self, f_l: Option<f64>) -> Result<()> {
        let positive = [
            ("estimation_window", self.estimation_window),
            ("adopt_radius", self.adopt_radius),
            ("phase_tolerance", self.phase_tolerance),
            ("trim_gain", self.trim_gain),
            ("distortion_rel_tol", self.distortion_rel_tol),
            ("refine_threshold", self.refine_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.t_filter.is_finite() && self.t_filter >= 0.0) {
            return Err(Error::Config("t_filter must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.hysteresis_fraction) {
            return Err(Error::Config("hysteresis_fraction must lie in [0, 1)".into()));
        }
        if !(self.anchor_gain > 0.0 && self.anchor_gain <= 1.0) {
            return Err(Error::Config("anchor_gain must lie in (0, 1]".into()));
        }
        if self.distortion_count == 0 {
            return Err(Error::Config("distortion_count must be >= 1".into()));
        }
        if let Some(f) = f_l {
            if self.estimation_window < 3.0 / f {
                return Err(Error::Config(format!(
                    "estimation_window {:e} s shorter than 3 periods at {f:.0} Hz",
                    self.estimation_window
                )));
            }
        }
        Ok(())
    }

    fn source(&self) -> SignalSource {
        match self.sense_mode {
            SenseMode::CapacitorVoltage => SignalSource::CapacitorVoltage,
            SenseMode::LoadVoltage => SignalSource::LoadVoltage,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub mode: ControllerMode,
    /// Zero-crossing instants of recent upward edges.
    pub edge_buffer: VecDeque<f64>,
    pub freq_estimate: f64,
    pub active_entry: Option<FrequencyTableEntry>,
    pub phase_error: f64,
    pub distortion_flags: u32,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self {
            mode: ControllerMode::Sense,
            edge_buffer: VecDeque::new(),
            freq_estimate: 0.0,
            active_entry: None,
            phase_error: 0.0,
            distortion_flags: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerEvent {
    Engaged {
        t: f64,
        freq: f64,
        entry_freq: f64,
        origin: EntryOrigin,
    },
    Refined {
        t: f64,
        freq: f64,
    },
    Restart {
        t: f64,
    },
    Unreachable {
        t: f64,
        freq: f64,
    },
    Trimmed {
        t: f64,
        phase_deg: f64,
        t_on: f64,
    },
}

/// Comparator followed by a pure delay of `t_filter`.
#[derive(Debug, Clone)]
pub struct FilteredComparator {
    detector: ZeroCrossDetector,
    delay: f64,
    pending: VecDeque<EdgeEvent>,
}

impl FilteredComparator {
    pub fn new(hysteresis: Hysteresis, source: SignalSource, delay: f64) -> Self {
        Self {
            detector: ZeroCrossDetector::new(hysteresis, source),
            delay,
            pending: VecDeque::new(),
        }
    }

    /// Feed one sample; returns an edge whose delayed time has arrived.
    pub fn push(&mut self, t: f64, x: f64) -> Option<EdgeEvent> {
        if let Some(mut e) = self.detector.push(t, x) {
            e.t += self.delay;
            self.pending.push_back(e);
        }
        match self.pending.front() {
            Some(e) if e.t <= t => self.pending.pop_front(),
            _ => None,
        }
    }
}

/// Offline form: zero crossings of a sampled window, each delayed by `t_filter`.
pub fn filtered_comparator(signal: &[f64], t0: f64, dt: f64, hysteresis: f64, config: &ControllerConfig) -> Vec<EdgeEvent> {
    let mut ev = detect_zero_cross(signal, t0, dt, hysteresis);
    for e in &mut ev {
        e.t += config.t_filter;
        e.source = config.source();
    }
    ev
}

/// Mean edge rate over the upward edges in the last `window` seconds.
pub fn estimate_frequency(edges: &[f64], window: f64) -> Result<f64> {
    let Some(&last) = edges.last() else {
        return Err(Error::InsufficientData("no edges".into()));
    };
    let start = edges.partition_point(|&t| t < last - window * (1.0 + 1e-9));
    let w = &edges[start..];
    if w.len() < 2 {
        return Err(Error::InsufficientData(format!("{} edge(s) in window", w.len())));
    }
    Ok((w.len() - 1) as f64 / (last - w[0]))
}

/// Closest table entry within `radius`; exact ties go to the lower frequency.
pub fn nearest_known(freq: f64, table: &[FrequencyTableEntry], radius: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in table.iter().enumerate() {
        let d = (e.freq - freq).abs();
        if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Nudge `t_on` toward a 90° lead of I_R over I_T.
pub fn regulate_phase(phase_diff_deg: f64, duty: DutyTimes, config: &ControllerConfig) -> DutyTimes {
    let err = phase_diff_deg - 90.0;
    if err.abs() <= config.phase_tolerance {
        return duty;
    }
    let f = 1.0 / duty.period;
    let t_on = (duty.t_on * (1.0 + config.trim_gain * err / 90.0)).clamp(0.0, max_t_on(f, config.t_filter, config.sense_mode));
    DutyTimes::from_t_on(t_on, f)
}

/// True when any interval between consecutive edges departs from the
/// expected period by more than the relative tolerance.
pub fn detect_distortion(edges: &[f64], freq_estimate: f64, rel_tol: f64) -> bool {
    edges
        .windows(2)
        .any(|w| ((w[1] - w[0]) * freq_estimate - 1.0).abs() > rel_tol)
}

/// Live phase probe on the transmitter current (calibration only).
#[derive(Debug, Clone)]
struct PhaseProbe {
    it_detector: ZeroCrossDetector,
    last_ir_zero: Option<f64>,
    samples: Vec<f64>,
    since_trim: u32,
}

/// Periods to wait after a duty change before judging phase again.
const EARLY_ADOPT_INTERVALS: usize = 4;
const EARLY_ADOPT_REL_TOL: f64 = 0.01;
const TRIM_SETTLE_EDGES: u32 = 40;
const TRIM_AVERAGE_EDGES: usize = 10;

/// The intruder's controller.
#[derive(Debug, Clone)]
pub struct Interceptor {
    pub config: ControllerConfig,
    params: SystemParams,
    pub table: Vec<FrequencyTableEntry>,
    state: ControllerState,
    comparator: FilteredComparator,
    last_edge: Option<f64>,
    distorted: Vec<f64>,
    anchor: Option<f64>,
    /// Frequency at which the active duty was selected.
    selected_at: f64,
    engaged_at: f64,
    /// Index of an entry memorized by this controller that may be refined.
    memorized: Option<usize>,
    blocked: Option<f64>,
    pinned: bool,
    probe: Option<PhaseProbe>,
    pub events: Vec<ControllerEvent>,
}

impl Interceptor {
    pub fn new(config: ControllerConfig, params: SystemParams, mut table: Vec<FrequencyTableEntry>) -> Self {
        table.sort_by(|a, b| a.freq.total_cmp(&b.freq));
        let comparator = FilteredComparator::new(
            Hysteresis::PeakFraction {
                fraction: config.hysteresis_fraction,
                decay_tau: 50e-6,
            },
            config.source(),
            config.t_filter,
        );
        let probe = config.oracle_phase.then(|| PhaseProbe {
            it_detector: ZeroCrossDetector::new(
                Hysteresis::PeakFraction {
                    fraction: 0.02,
                    decay_tau: 50e-6,
                },
                SignalSource::TransmitterCurrent,
            ),
            last_ir_zero: None,
            samples: Vec::new(),
            since_trim: 0,
        });
        Self {
            config,
            params,
            table,
            state: ControllerState::default(),
            comparator,
            last_edge: None,
            distorted: Vec::new(),
            anchor: None,
            selected_at: 0.0,
            engaged_at: 0.0,
            memorized: None,
            blocked: None,
            pinned: false,
            probe,
            events: Vec::new(),
        }
    }

    /// Controller fixed at one frequency and duty; it only tracks the
    /// sensed edges to anchor the switch pattern.
    pub fn pinned(freq: f64, duty: DutyTimes, mut config: ControllerConfig, params: SystemParams) -> Self {
        config.oracle_phase = false;
        let mut c = Self::new(config, params, Vec::new());
        c.pinned = true;
        c.state.mode = ControllerMode::Engage;
        c.state.freq_estimate = freq;
        c.state.active_entry = Some(FrequencyTableEntry {
            freq,
            duty,
            origin: EntryOrigin::Calibrated,
            hits: 0,
        });
        c.selected_at = freq;
        c
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn mode(&self) -> ControllerMode {
        self.state.mode
    }

    /// Current-zero instant implied by a sensed edge at zero time `tz`.
    fn current_zero(&self, tz: f64) -> f64 {
        match self.config.sense_mode {
            SenseMode::LoadVoltage => tz,
            SenseMode::CapacitorVoltage if self.state.freq_estimate > 0.0 => tz - 0.25 / self.state.freq_estimate,
            SenseMode::CapacitorVoltage => tz,
        }
    }

    /// Time by which the open receiver's current zero precedes the EMF zero.
    /// Engaging at resonance puts the current zero on the EMF zero.
    fn open_lead(&self, f: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * f;
        let x = w * self.params.l_r - 1.0 / (w * self.params.c_r1);
        (-x).atan2(self.params.r_load) / w
    }

    fn track_anchor(&mut self, tz: f64) {
        let target = self.current_zero(tz);
        let half = 0.5 / self.state.freq_estimate;
        self.anchor = Some(match self.anchor {
            Some(a) if half.is_finite() => {
                let err = (target - a + 0.5 * half).rem_euclid(half) - 0.5 * half;
                target - err + self.config.anchor_gain * err
            }
            _ => target,
        });
    }

    fn in_band(&self, f: f64) -> bool {
        let (lo, hi) = achievable_band(self.params.l_r, self.params.c_r1, self.params.c_r2);
        f >= lo && f <= hi
    }

    fn push_consistent(&mut self, tz: f64) {
        let buf = &mut self.state.edge_buffer;
        if buf.len() >= 2 {
            let first = *buf.front().unwrap();
            let last = *buf.back().unwrap();
            let mean = (last - first) / (buf.len() - 1) as f64;
            if ((tz - last) / mean - 1.0).abs() > self.config.distortion_rel_tol {
                buf.clear();
            }
        }
        buf.push_back(tz);
    }

    fn trim_buffer(&mut self) {
        let w = self.config.estimation_window;
        let buf = &mut self.state.edge_buffer;
        if let Some(&last) = buf.back() {
            while buf.len() > 2 && buf.front().is_some_and(|&t| t < last - w) {
                buf.pop_front();
            }
        }
    }

    fn on_edge(&mut self, tz: f64, now: f64) {
        let prev = self.last_edge.replace(tz);
        match self.state.mode {
            ControllerMode::Sense => match self.blocked {
                None => {
                    self.state.mode = ControllerMode::Estimate;
                    self.state.edge_buffer.clear();
                    self.state.edge_buffer.push_back(tz);
                }
                Some(fb) => {
                    self.push_consistent(tz);
                    let buf: Vec<f64> = self.state.edge_buffer.iter().copied().collect();
                    if buf.last().unwrap() - buf[0] >= self.config.estimation_window {
                        if let Ok(f) = estimate_frequency(&buf, self.config.estimation_window) {
                            if (f - fb).abs() > self.config.adopt_radius.max(0.02 * fb) {
                                self.blocked = None;
                                self.state.mode = ControllerMode::Estimate;
                            }
                        }
                        self.trim_buffer();
                    }
                }
            },
            ControllerMode::Estimate => self.push_consistent(tz),
            ControllerMode::Engage => {
                if self.pinned {
                    if self.anchor.is_some() {
                        self.track_anchor(tz);
                    } else if tz >= self.config.estimation_window {
                        self.anchor = Some(self.current_zero(tz) + self.open_lead(self.state.freq_estimate));
                    }
                    return;
                }
                let f = self.state.freq_estimate;
                let bad = prev.is_some_and(|p| detect_distortion(&[p, tz], f, self.config.distortion_rel_tol));
                if bad {
                    self.state.distortion_flags += 1;
                    self.distorted.push(tz);
                    if self.state.distortion_flags >= self.config.distortion_count {
                        self.restart(now);
                    }
                    return;
                }
                self.state.distortion_flags = 0;
                self.distorted.clear();
                self.track_anchor(tz);
                // Edges shift while the switched waveform settles; estimate from settled ones only.
                if tz < self.engaged_at + self.config.estimation_window {
                    self.probe_ir(tz);
                    return;
                }
                self.state.edge_buffer.push_back(tz);
                self.trim_buffer();
                let buf: Vec<f64> = self.state.edge_buffer.iter().copied().collect();
                if buf.last().unwrap() - buf[0] >= 0.9 * self.config.estimation_window {
                    // Switched edges follow the pattern, so the pattern keeps its frequency until the measurement moves away.
                    if let Ok(fe) = estimate_frequency(&buf, self.config.estimation_window) {
                        if (fe - self.selected_at).abs() > self.config.refine_threshold {
                            self.state.freq_estimate = fe;
                            self.refine(now);
                        }
                    }
                }
                self.probe_ir(tz);
            }
        }
    }

    /// Distortion restart: switch off and re-estimate from the edges that
    /// arrived since the disturbance began.
    fn restart(&mut self, now: f64) {
        self.events.push(ControllerEvent::Restart { t: now });
        self.state.mode = ControllerMode::Sense;
        self.state.active_entry = None;
        self.state.distortion_flags = 0;
        self.anchor = None;
        self.memorized = None;
        self.state.edge_buffer.clear();
        let seed = std::mem::take(&mut self.distorted);
        if !seed.is_empty() {
            self.state.mode = ControllerMode::Estimate;
            for t in seed {
                self.push_consistent(t);
            }
        }
        if let Some(p) = self.probe.as_mut() {
            p.samples.clear();
            p.since_trim = 0;
            p.last_ir_zero = None;
        }
    }

    fn select_duty(&mut self, f: f64) -> Option<(FrequencyTableEntry, Option<usize>)> {
        let t_max = max_t_on(f, self.config.t_filter, self.config.sense_mode);
        let clamp = |d: DutyTimes, fe: f64| DutyTimes::from_t_on(d.t_on.clamp(0.0, t_max), fe);
        if let Some(i) = nearest_known(f, &self.table, self.config.adopt_radius) {
            self.table[i].hits += 1;
            let mut e = self.table[i];
            if !self.config.regulation_enabled {
                e.duty = ton_toff(e.freq, self.params.l_r, self.params.c_r1, self.params.c_r2).ok()?;
                e.origin = EntryOrigin::Computed;
            }
            e.duty = clamp(e.duty, f);
            return Some((e, None));
        }
        let duty = ton_toff(f, self.params.l_r, self.params.c_r1, self.params.c_r2).ok()?;
        let entry = FrequencyTableEntry {
            freq: f,
            duty,
            origin: EntryOrigin::Computed,
            hits: 1,
        };
        let idx = self.table.partition_point(|e| e.freq < f);
        self.table.insert(idx, entry);
        Some((
            FrequencyTableEntry {
                duty: clamp(duty, f),
                ..entry
            },
            Some(idx),
        ))
    }

    /// Known frequencies are adopted as soon as a few clean intervals agree with one.
    fn early_frequency(&self) -> Option<f64> {
        let buf = &self.state.edge_buffer;
        if self.table.is_empty() || buf.len() <= EARLY_ADOPT_INTERVALS {
            return None;
        }
        let n = buf.len() - 1;
        let k0 = n - EARLY_ADOPT_INTERVALS;
        let mean = (buf[n] - buf[k0]) / EARLY_ADOPT_INTERVALS as f64;
        let clean = (k0..n).all(|i| ((buf[i + 1] - buf[i]) / mean - 1.0).abs() <= EARLY_ADOPT_REL_TOL);
        if !clean {
            return None;
        }
        let f = 1.0 / mean;
        nearest_known(f, &self.table, self.config.adopt_radius)
            .map(|i| self.table[i].freq)
            .filter(|&fk| self.in_band(fk))
    }

    fn finish_estimate(&mut self, now: f64, early: Option<f64>) {
        let buf: Vec<f64> = self.state.edge_buffer.iter().copied().collect();
        let f = match early {
            Some(f) => f,
            None => match estimate_frequency(&buf, self.config.estimation_window) {
                Ok(f) => f,
                Err(_) => return,
            },
        };
        self.state.freq_estimate = f;
        let selected = if self.in_band(f) { self.select_duty(f) } else { None };
        let Some((entry, memorized)) = selected else {
            self.events.push(ControllerEvent::Unreachable { t: now, freq: f });
            self.blocked = Some(f);
            self.state.mode = ControllerMode::Sense;
            return;
        };
        self.memorized = memorized;
        self.selected_at = f;
        self.state.active_entry = Some(entry);
        self.state.mode = ControllerMode::Engage;
        self.state.distortion_flags = 0;
        self.anchor = buf.last().map(|&t| self.current_zero(t) + self.open_lead(f));
        self.engaged_at = now;
        self.state.edge_buffer.clear();
        self.events.push(ControllerEvent::Engaged {
            t: now,
            freq: f,
            entry_freq: entry.freq,
            origin: entry.origin,
        });
    }

    fn refine(&mut self, now: f64) {
        let f = self.state.freq_estimate;
        if !self.in_band(f) {
            return;
        }
        if let Some(i) = self.memorized {
            if let Ok(duty) = ton_toff(f, self.params.l_r, self.params.c_r1, self.params.c_r2) {
                let e = &mut self.table[i];
                e.freq = f;
                e.duty = duty;
                e.origin = EntryOrigin::Refined;
                let t_max = max_t_on(f, self.config.t_filter, self.config.sense_mode);
                let mut active = *e;
                active.duty = DutyTimes::from_t_on(duty.t_on.min(t_max), f);
                self.state.active_entry = Some(active);
                self.table.sort_by(|a, b| a.freq.total_cmp(&b.freq));
                self.memorized = self.table.iter().position(|x| x.freq == f);
            }
        } else if let Some((entry, memorized)) = self.select_duty(f) {
            self.state.active_entry = Some(entry);
            self.memorized = memorized;
        }
        self.selected_at = f;
        self.events.push(ControllerEvent::Refined { t: now, freq: f });
    }

    fn probe_ir(&mut self, tz: f64) {
        let cz = self.current_zero(tz);
        if let Some(p) = self.probe.as_mut() {
            p.last_ir_zero = Some(cz);
        }
    }

    fn probe_it(&mut self, t: f64, i_t: f64) {
        let f = self.state.freq_estimate;
        let Some(p) = self.probe.as_mut() else { return };
        let Some(ev) = p.it_detector.push(t, i_t) else { return };
        if ev.kind != EdgeKind::Upward || self.state.mode != ControllerMode::Engage || f <= 0.0 {
            return;
        }
        let Some(ir) = p.last_ir_zero else { return };
        // I_R leads when its zero precedes the transmitter's
        let phase = wrap_deg((ev.t - ir) * f * 360.0);
        p.samples.push(phase);
        p.since_trim += 1;
        if p.since_trim < TRIM_SETTLE_EDGES || !self.config.regulation_enabled {
            return;
        }
        let n = p.samples.len().min(TRIM_AVERAGE_EDGES);
        let mean = p.samples[p.samples.len() - n..].iter().sum::<f64>() / n as f64;
        p.since_trim = 0;
        p.samples.clear();
        self.state.phase_error = mean - 90.0;
        if let Some(e) = self.state.active_entry.as_mut() {
            let d = regulate_phase(mean, DutyTimes::from_t_on(e.duty.t_on, f), &self.config);
            if d.t_on != e.duty.t_on {
                e.duty = d;
                e.origin = EntryOrigin::Calibrated;
                self.events.push(ControllerEvent::Trimmed {
                    t,
                    phase_deg: mean,
                    t_on: d.t_on,
                });
            }
        }
    }

    fn pattern(&self, t: f64) -> bool {
        let (Some(anchor), Some(e)) = (self.anchor, self.state.active_entry.as_ref()) else {
            return false;
        };
        let f = self.state.freq_estimate;
        if f <= 0.0 {
            return false;
        }
        let half = 0.5 / f;
        let t_on = e.duty.t_on.min(half);
        let lead = 0.5 * (half - t_on);
        let ph = (t - anchor).rem_euclid(half);
        ph >= lead && ph < lead + t_on
    }
}

impl SwitchController for Interceptor {
    fn taps(&self) -> Taps {
        Taps {
            v_c1: self.config.sense_mode == SenseMode::CapacitorVoltage,
            v_load: self.config.sense_mode == SenseMode::LoadVoltage,
            i_t: self.config.oracle_phase,
        }
    }

    fn step(&mut self, obs: &Observation) -> bool {
        let x = match self.config.sense_mode {
            SenseMode::CapacitorVoltage => obs.v_c1,
            SenseMode::LoadVoltage => obs.v_load,
        }
        .unwrap_or(0.0);
        if let Some(ev) = self.comparator.push(obs.t, x) {
            if ev.kind == EdgeKind::Upward {
                self.on_edge(ev.t - self.config.t_filter, obs.t);
            }
        }
        if let Some(i_t) = obs.i_t {
            self.probe_it(obs.t, i_t);
        }
        if self.state.mode == ControllerMode::Estimate {
            let ready = self.state.edge_buffer.len() >= 2
                && self
                    .state
                    .edge_buffer
                    .front()
                    .is_some_and(|&t0| obs.t - t0 >= self.config.estimation_window);
            if ready {
                self.finish_estimate(obs.t, None);
            } else if let Some(f) = self.early_frequency() {
                self.finish_estimate(obs.t, Some(f));
            }
        }
        match self.state.mode {
            ControllerMode::Engage => self.pattern(obs.t),
            _ => false,
        }
    }

    fn telemetry(&self) -> Telemetry {
        Telemetry {
            mode: Some(self.state.mode),
            f_estimate: self.state.freq_estimate,
            t_on: match self.state.mode {
                ControllerMode::Engage => self.state.active_entry.map_or(0.0, |e| e.duty.t_on),
                _ => 0.0,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_frequency_table;
    use std::f64::consts::TAU;

    fn table() -> Vec<FrequencyTableEntry> {
        build_frequency_table(&[65e3, 125e3], 38e-6, 22e-9, 147e-9).unwrap()
    }

    #[test]
    fn estimate_examples() {
        let edges: Vec<f64> = (0..10).map(|k| k as f64 / 65e3).collect();
        assert!((estimate_frequency(&edges, 1e-3).unwrap() - 65e3).abs() < 1e-6);
        assert!(matches!(estimate_frequency(&[1e-6], 1e-4), Err(Error::InsufficientData(_))));
        assert!(estimate_frequency(&[], 1e-4).is_err());
    }

    #[test]
    fn nearest_examples() {
        let t = table();
        assert_eq!(nearest_known(65.4e3, &t, 1000.0), Some(0));
        assert_eq!(nearest_known(70e3, &t, 1000.0), None);
        let mut t2 = t.clone();
        t2[1].freq = 66e3;
        assert_eq!(nearest_known(65.5e3, &t2, 1000.0), Some(0));
    }

    #[test]
    fn regulate_examples() {
        let c = ControllerConfig::default();
        let d = DutyTimes::from_t_on(2e-6, 100e3);
        assert_eq!(regulate_phase(90.0, d, &c), d);
        assert_eq!(regulate_phase(91.5, d, &c), d);
        let up = regulate_phase(95.0, d, &c);
        assert!(up.t_on > d.t_on);
        assert!((up.t_on + up.t_off - 5e-6).abs() < 1e-18);
        assert!(regulate_phase(80.0, d, &c).t_on < d.t_on);
    }

    #[test]
    fn distortion_examples() {
        let clean: Vec<f64> = (0..8).map(|k| k as f64 / 65e3).collect();
        assert!(!detect_distortion(&clean, 65e3, 0.3));
        let mut hop = clean.clone();
        let t0 = *hop.last().unwrap();
        hop.extend((1..4).map(|k| t0 + k as f64 / 125e3));
        assert!(detect_distortion(&hop[hop.len() - 3..], 65e3, 0.3));
    }

    #[test]
    fn delayed_comparator_shifts_edges() {
        let dt = 10e-9;
        let x: Vec<f64> = (0..20_000).map(|k| (TAU * 65e3 * k as f64 * dt).sin()).collect();
        let c0 = ControllerConfig {
            t_filter: 0.0,
            ..Default::default()
        };
        let base = detect_zero_cross(&x, 0.0, dt, 0.0);
        let a = filtered_comparator(&x, 0.0, dt, 0.0, &c0);
        assert_eq!(a.iter().map(|e| e.t).collect::<Vec<_>>(), base.iter().map(|e| e.t).collect::<Vec<_>>());
        let c = ControllerConfig::default();
        let b = filtered_comparator(&x, 0.0, dt, 0.0, &c);
        for (e, f) in base.iter().zip(&b) {
            assert!((f.t - e.t - 0.75e-6).abs() < 1e-15);
        }
        let ups: Vec<f64> = b.iter().filter(|e| e.kind == EdgeKind::Upward).map(|e| e.t).collect();
        for (k, t) in ups.iter().enumerate() {
            assert!((t - (k + 1) as f64 / 65e3 - 0.75e-6).abs() < dt);
        }
    }

    #[test]
    fn streaming_comparator_releases_after_delay() {
        let mut c = FilteredComparator::new(Hysteresis::Fixed(0.0), SignalSource::Other, 1e-6);
        assert!(c.push(0.0, -1.0).is_none());
        assert!(c.push(1e-8, 1.0).is_none());
        assert!(c.push(5e-7, 1.0).is_none());
        let e = c.push(1.1e-6, 1.0).unwrap();
        assert!((e.t - 1.005e-6).abs() < 1e-15);
    }

    #[test]
    fn distorted_waveform_reports_all_crossings() {
        let dt = 10e-9;
        let f = 65e3;
        let x: Vec<f64> = (0..10_000)
            .map(|k| {
                let p = TAU * f * k as f64 * dt;
                p.sin() + 0.8 * (5.0 * p).sin()
            })
            .collect();
        let brute = x.windows(2).filter(|w| (w[0] < 0.0) != (w[1] < 0.0)).count();
        let ev = filtered_comparator(&x, 0.0, dt, 0.0, &ControllerConfig::default());
        assert!(ev.len() + 1 >= brute && ev.len() <= brute);
    }

    #[test]
    fn config_validation() {
        assert!(ControllerConfig::default().validate(Some(50e3)).is_ok());
        let c = ControllerConfig {
            estimation_window: 30e-6,
            ..Default::default()
        };
        assert!(c.validate(Some(65e3)).is_err());
    }
}
