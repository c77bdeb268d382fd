//! Compensation math for the switched-capacitor receiver: duty times,
//! equivalent capacitance, capacitor sizing and the frequency table.

use std::f64::consts::{PI, TAU};
use std::fmt;

use crate::encryptor::HopSchedule;
use crate::error::{Error, Result};
use crate::harness::metrics::fundamental;
use crate::interceptor::{ControllerConfig, Interceptor};
use crate::plant::{resonant_frequency, Plant, SystemParams};
use crate::sim::{SimConfig, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SenseMode {
    CapacitorVoltage,
    LoadVoltage,
}

impl SenseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SenseMode::CapacitorVoltage => "capacitor-voltage",
            SenseMode::LoadVoltage => "load-voltage",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "capacitor-voltage" => Some(SenseMode::CapacitorVoltage),
            "load-voltage" => Some(SenseMode::LoadVoltage),
            _ => None,
        }
    }
}

/// Closed and open time of the switch in each half cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyTimes {
    pub t_on: f64,
    pub t_off: f64,
    pub period: f64,
}

impl DutyTimes {
    /// Duty for frequency `f` with the given closed time; `t_off` fills the half period.
    pub fn from_t_on(t_on: f64, f: f64) -> Self {
        let period = 1.0 / f;
        Self {
            t_on,
            t_off: 0.5 * period - t_on,
            period,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryOrigin {
    Computed,
    Calibrated,
    Refined,
}

impl EntryOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryOrigin::Computed => "computed",
            EntryOrigin::Calibrated => "calibrated",
            EntryOrigin::Refined => "refined",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "computed" => Some(EntryOrigin::Computed),
            "calibrated" => Some(EntryOrigin::Calibrated),
            "refined" => Some(EntryOrigin::Refined),
            _ => None,
        }
    }
}

impl fmt::Display for EntryOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyTableEntry {
    pub freq: f64,
    pub duty: DutyTimes,
    pub origin: EntryOrigin,
    pub hits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignBand {
    pub f_l: f64,
    pub f_h: f64,
    pub t_filter: f64,
    pub sense_mode: SenseMode,
}

impl DesignBand {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_l > 0.0 && self.f_h > self.f_l && self.f_h.is_finite()) {
            return Err(Error::Config(format!(
                "design band needs 0 < f_l < f_h, got [{}, {}]",
                self.f_l, self.f_h
            )));
        }
        if !(self.t_filter >= 0.0 && self.t_filter.is_finite()) {
            return Err(Error::Config("t_filter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Frequencies the switched network can tune to: `[closed, open]` resonance.
pub fn achievable_band(l_r: f64, c_r1: f64, c_r2: f64) -> (f64, f64) {
    (resonant_frequency(l_r, c_r1 + c_r2), resonant_frequency(l_r, c_r1))
}

/// Closed-form switch times that make the network resonate with `l_r` at `f_t`.
pub fn ton_toff(f_t: f64, l_r: f64, c_r1: f64, c_r2: f64) -> Result<DutyTimes> {
    for (name, v) in [("f_t", f_t), ("l_r", l_r), ("c_r1", c_r1), ("c_r2", c_r2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be > 0")));
        }
    }
    let w = TAU * f_t;
    let mut a = (c_r1 + c_r2) / c_r2 * (1.0 - w * w * l_r * c_r1);
    // absorb rounding exactly at the band edges
    if (-1e-12..0.0).contains(&a) {
        a = 0.0;
    } else if (1.0..1.0 + 1e-12).contains(&a) {
        a = 1.0;
    }
    if !(0.0..=1.0).contains(&a) {
        let (f_min, f_max) = achievable_band(l_r, c_r1, c_r2);
        return Err(Error::OutOfBand {
            freq: f_t,
            f_min,
            f_max,
        });
    }
    let t_on = a.asin() / (PI * f_t);
    Ok(DutyTimes::from_t_on(t_on, f_t))
}

pub fn equivalent_capacitance(t_off: f64, f_t: f64, c_r1: f64, c_r2: f64) -> Result<f64> {
    let half = 0.5 / f_t;
    if !(0.0..=half * (1.0 + 1e-12)).contains(&t_off) {
        return Err(Error::Domain(format!(
            "t_off = {t_off:e} s outside [0, {half:e}] s"
        )));
    }
    let k = (PI * f_t * t_off).cos();
    Ok(1.0 / ((1.0 - k) / c_r1 + k / (c_r1 + c_r2)))
}

pub fn ideal_capacitance(f_t: f64, l_r: f64) -> f64 {
    1.0 / ((TAU * f_t).powi(2) * l_r)
}

/// Share of the loop current carried by C_R1 and C_R2 while closed.
pub fn splitting_factors(c_r1: f64, c_r2: f64) -> (f64, f64) {
    let k1 = c_r1 / (c_r1 + c_r2);
    (k1, 1.0 - k1)
}

/// Largest closed time the controller can realise at `f` in a sense mode.
///
/// Sensing the load voltage fixes the closure to start no earlier than the
/// filter delay after a current zero, on both sides of the half cycle.
/// Capacitor-voltage edges arrive a quarter period ahead of the current
/// zero, so the whole half period stays reachable.
pub fn max_t_on(f: f64, t_filter: f64, mode: SenseMode) -> f64 {
    let half = 0.5 / f;
    match mode {
        SenseMode::LoadVoltage => (half - 2.0 * t_filter).max(0.0),
        SenseMode::CapacitorVoltage => half,
    }
}

/// Capacitor bounds for a design band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacitorSelection {
    pub band: DesignBand,
    pub l_r: f64,
    pub c_r2: f64,
    /// Upper bound on C_R1.
    pub c_r1_max: f64,
    /// Lower bound on C_R1 + C_R2.
    pub c_sum_min: f64,
}

impl CapacitorSelection {
    pub fn c_r2_min(&self, c_r1: f64) -> f64 {
        (self.c_sum_min - c_r1).max(0.0)
    }

    /// Whether `(c_r1, self.c_r2)` covers the band.
    pub fn admits(&self, c_r1: f64) -> bool {
        c_r1 > 0.0 && c_r1 <= self.c_r1_max && c_r1 + self.c_r2 >= self.c_sum_min
    }
}

pub fn select_capacitors(band: &DesignBand, l_r: f64, c_r2: f64) -> Result<CapacitorSelection> {
    band.validate()?;
    if !(l_r > 0.0 && c_r2 > 0.0) {
        return Err(Error::Domain("l_r and c_r2 must be > 0".into()));
    }
    let wh2l = (TAU * band.f_h).powi(2) * l_r;
    let c_r1_max = match band.sense_mode {
        SenseMode::LoadVoltage => 1.0 / wh2l,
        SenseMode::CapacitorVoltage => {
            let s = (PI * band.f_h * band.t_filter).sin();
            let den = wh2l - s / c_r2;
            if den <= 0.0 || s >= 1.0 {
                return Err(Error::InfeasibleBand(format!(
                    "filter time {:e} s leaves no C_R1 at {:.0} Hz",
                    band.t_filter, band.f_h
                )));
            }
            (1.0 - s) / den
        }
    };
    Ok(CapacitorSelection {
        band: *band,
        l_r,
        c_r2,
        c_r1_max,
        c_sum_min: ideal_capacitance(band.f_l, l_r),
    })
}

/// One computed entry per distinct frequency, sorted; frequencies within
/// 1 Hz merge into the first.
pub fn build_frequency_table(freqs: &[f64], l_r: f64, c_r1: f64, c_r2: f64) -> Result<Vec<FrequencyTableEntry>> {
    let mut sorted = freqs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<FrequencyTableEntry> = Vec::new();
    for f in sorted {
        if out.last().is_some_and(|e| (f - e.freq).abs() <= 1.0) {
            continue;
        }
        out.push(FrequencyTableEntry {
            freq: f,
            duty: ton_toff(f, l_r, c_r1, c_r2)?,
            origin: EntryOrigin::Computed,
            hits: 0,
        });
    }
    Ok(out)
}

pub fn table_to_csv(table: &[FrequencyTableEntry]) -> String {
    let mut s = String::from("freq_hz,t_on_s,t_off_s,origin\n");
    for e in table {
        s.push_str(&format!(
            "{:e},{:e},{:e},{}\n",
            e.freq, e.duty.t_on, e.duty.t_off, e.origin
        ));
    }
    s
}

pub fn table_from_csv(text: &str) -> Result<Vec<FrequencyTableEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "freq_hz,t_on_s,t_off_s,origin" => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "expected header freq_hz,t_on_s,t_off_s,origin".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { line: i + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number '{s}'")))
        };
        let freq = num(f[0])?;
        let t_on = num(f[1])?;
        let t_off = num(f[2])?;
        let origin = EntryOrigin::parse(f[3]).ok_or_else(|| err(format!("unknown origin '{}'", f[3])))?;
        if freq <= 0.0 || t_on < 0.0 || t_off < 0.0 {
            return Err(err("negative time or non-positive frequency".into()));
        }
        if ((t_on + t_off) * 2.0 * freq - 1.0).abs() > 1e-6 {
            return Err(err("t_on + t_off must equal half the period".into()));
        }
        out.push(FrequencyTableEntry {
            freq,
            duty: DutyTimes {
                t_on,
                t_off,
                period: 1.0 / freq,
            },
            origin,
            hits: 0,
        });
    }
    out.sort_by(|a, b| a.freq.total_cmp(&b.freq));
    Ok(out)
}

/// Steady response of the intruder alone at `freq` with a pinned duty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyResponse {
    pub t_on: f64,
    /// Phase of I_R relative to I_T (degrees, positive = leads).
    pub phase_deg: f64,
    /// Fundamental amplitude of I_R (A).
    pub amplitude: f64,
    /// RMS of I_R (A).
    pub rms: f64,
}

/// Simulate the intruder driven at `freq` with closed time `t_on`, the
/// switch anchored by its own sensed edges, and measure the steady response.
pub fn steady_response(
    params: &SystemParams,
    freq: f64,
    t_on: f64,
    config: &ControllerConfig,
    dt: f64,
) -> Result<SteadyResponse> {
    let tau = 2.0 * params.l_r / params.r_load;
    let period = 1.0 / freq;
    let measure = 20.0 * period;
    let settle = config.estimation_window + (60.0 * period).max(14.0 * tau);
    let plant = Plant::new(*params);
    let schedule = HopSchedule::fixed(freq);
    let mut ctl = Interceptor::pinned(freq, DutyTimes::from_t_on(t_on, freq), config.clone(), *params);
    let out = Simulation::new(&plant, &schedule, SimConfig::new(dt, settle + measure))
        .controller(&mut ctl)
        .run()?;
    let tr = &out.trace;
    let i0 = tr.index_at(settle);
    let a = &tr.receivers[0].i_r[i0..];
    let t0 = tr.t[i0];
    let (amp_r, ph_r) = fundamental(a, tr.sample_dt, t0, freq)?;
    let (_, ph_t) = fundamental(&tr.i_t[i0..], tr.sample_dt, t0, freq)?;
    let rms = (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt();
    Ok(SteadyResponse {
        t_on,
        phase_deg: wrap_deg((ph_r - ph_t).to_degrees()),
        amplitude: amp_r,
        rms,
    })
}

pub(crate) fn wrap_deg(d: f64) -> f64 {
    let w = (d + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

/// Phase tolerance of calibration (degrees).
pub const CALIBRATION_TOLERANCE_DEG: f64 = 0.5;
pub const CALIBRATION_MAX_ITERATIONS: usize = 50;

/// Trim `t_on` until I_R leads I_T by 90° in steady state, observing the
/// transmitter phase directly (a lab-side measurement).
///
/// Proportional multiplicative steps (gain `trim_gain`, at most ±10%)
/// until the phase error changes sign, then regula falsi on the bracket.
pub fn calibrate_entry(
    entry: &FrequencyTableEntry,
    params: &SystemParams,
    config: &ControllerConfig,
    dt: f64,
) -> Result<FrequencyTableEntry> {
    let f = entry.freq;
    let t_max = max_t_on(f, config.t_filter, config.sense_mode);
    let eval = |t: f64| -> Result<f64> {
        Ok(steady_response(params, f, t, config, dt)?.phase_deg - 90.0)
    };
    let mut t = entry.duty.t_on.clamp(0.0, t_max);
    let mut e = eval(t)?;
    // (t_on, error) with error > 0 below, < 0 above
    let mut lo: Option<(f64, f64)> = None;
    let mut hi: Option<(f64, f64)> = None;
    let mut side = 0i8;
    for it in 0..CALIBRATION_MAX_ITERATIONS {
        if e.abs() < CALIBRATION_TOLERANCE_DEG {
            return Ok(FrequencyTableEntry {
                freq: f,
                duty: DutyTimes::from_t_on(t, f),
                origin: EntryOrigin::Calibrated,
                hits: entry.hits,
            });
        }
        if e > 0.0 {
            lo = Some((t, e));
        } else {
            hi = Some((t, e));
        }
        let next = match (lo, hi) {
            (Some((ta, ea)), Some((tb, eb))) => {
                // Illinois weighting keeps the retained end from stalling
                let (ea, eb) = match side {
                    1 => (ea * 0.5, eb),
                    -1 => (ea, eb * 0.5),
                    _ => (ea, eb),
                };
                ta + (tb - ta) * ea / (ea - eb)
            }
            _ => {
                let step = (config.trim_gain * e / 90.0).clamp(-0.1, 0.1);
                let base = if t > 0.0 { t } else { 0.01 * t_max };
                (base * (1.0 + step)).clamp(0.0, t_max)
            }
        };
        if next == t && (lo.is_none() || hi.is_none()) {
            return Err(Error::Calibration {
                freq: f,
                iterations: it + 1,
                phase_deg: e + 90.0,
            });
        }
        t = next;
        let prev_sign = e > 0.0;
        e = eval(t)?;
        side = if (e > 0.0) == prev_sign {
            if e > 0.0 {
                -1
            } else {
                1
            }
        } else {
            0
        };
    }
    Err(Error::Calibration {
        freq: f,
        iterations: CALIBRATION_MAX_ITERATIONS,
        phase_deg: e + 90.0,
    })
}
