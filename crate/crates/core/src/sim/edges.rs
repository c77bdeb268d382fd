//! Zero-crossing detection with a Schmitt-style hysteresis band.
//!
//! Edges are armed by the hysteresis band but timestamped at the
//! linearly interpolated zero-level crossing that preceded the arming
//! threshold, so a wide band rejects noise without biasing phase.

/// Direction of a zero crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Upward,
    Downward,
}

/// Which signal an edge was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalSource {
    CapacitorVoltage,
    LoadVoltage,
    TransmitterCurrent,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEvent {
    pub t: f64,
    pub kind: EdgeKind,
    pub source: SignalSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hysteresis {
    /// Absolute band half-width in signal units.
    Fixed(f64),
    /// Fraction of a decaying running peak of |x|.
    PeakFraction { fraction: f64, decay_tau: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Low,
    High,
}

/// Streaming zero-crossing detector.
#[derive(Debug, Clone)]
pub struct ZeroCrossDetector {
    hysteresis: Hysteresis,
    source: SignalSource,
    level: Option<Level>,
    prev: Option<(f64, f64)>,
    last_up_zero: Option<f64>,
    last_down_zero: Option<f64>,
    peak: f64,
}

impl ZeroCrossDetector {
    pub fn new(hysteresis: Hysteresis, source: SignalSource) -> Self {
        Self {
            hysteresis,
            source,
            level: None,
            prev: None,
            last_up_zero: None,
            last_down_zero: None,
            peak: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.level = None;
        self.prev = None;
        self.last_up_zero = None;
        self.last_down_zero = None;
        self.peak = 0.0;
    }

    pub fn band(&self) -> f64 {
        match self.hysteresis {
            Hysteresis::Fixed(h) => h.abs(),
            Hysteresis::PeakFraction { fraction, .. } => fraction * self.peak,
        }
    }

    /// Feed one sample; returns an edge when the band confirms a crossing.
    pub fn push(&mut self, t: f64, x: f64) -> Option<EdgeEvent> {
        if let Hysteresis::PeakFraction { decay_tau, .. } = self.hysteresis {
            let decay = match self.prev {
                Some((tp, _)) if decay_tau > 0.0 => (-(t - tp) / decay_tau).exp(),
                _ => 1.0,
            };
            self.peak = (self.peak * decay).max(x.abs());
        }

        if let Some((tp, xp)) = self.prev {
            if xp < 0.0 && x >= 0.0 {
                self.last_up_zero = Some(interp_zero(tp, xp, t, x));
            } else if xp > 0.0 && x <= 0.0 {
                self.last_down_zero = Some(interp_zero(tp, xp, t, x));
            }
        }
        self.prev = Some((t, x));

        let h = self.band();
        let above = x > h;
        let below = x < -h;
        let mut out = None;
        match self.level {
            None => {
                if above {
                    self.level = Some(Level::High);
                } else if below {
                    self.level = Some(Level::Low);
                }
            }
            Some(Level::Low) if above => {
                self.level = Some(Level::High);
                out = self.last_up_zero.map(|tz| EdgeEvent {
                    t: tz,
                    kind: EdgeKind::Upward,
                    source: self.source,
                });
            }
            Some(Level::High) if below => {
                self.level = Some(Level::Low);
                out = self.last_down_zero.map(|tz| EdgeEvent {
                    t: tz,
                    kind: EdgeKind::Downward,
                    source: self.source,
                });
            }
            _ => {}
        }
        out
    }
}

fn interp_zero(t0: f64, x0: f64, t1: f64, x1: f64) -> f64 {
    if x1 == x0 {
        return t1;
    }
    t0 + (t1 - t0) * (-x0 / (x1 - x0))
}

/// Offline zero-crossing detection over a uniformly sampled window
/// starting at `t0` with spacing `dt`.
pub fn detect_zero_cross(signal: &[f64], t0: f64, dt: f64, hysteresis: f64) -> Vec<EdgeEvent> {
    detect_zero_cross_from(signal, t0, dt, hysteresis, SignalSource::Other)
}

pub fn detect_zero_cross_from(
    signal: &[f64],
    t0: f64,
    dt: f64,
    hysteresis: f64,
    source: SignalSource,
) -> Vec<EdgeEvent> {
    let mut det = ZeroCrossDetector::new(Hysteresis::Fixed(hysteresis), source);
    signal
        .iter()
        .enumerate()
        .filter_map(|(k, &x)| det.push(t0 + k as f64 * dt, x))
        .collect()
}
