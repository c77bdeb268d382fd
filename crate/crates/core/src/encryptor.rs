//! Transmitter-side energy encryption: keyed frequency-hopping schedules
//! and the power-mismatch defense monitor.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub freq: f64,
    pub dwell: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub freq_set: Vec<f64>,
    pub dwell_range: (f64, f64),
    pub seed: u64,
}

/// The key: an explicit list of hops or a seeded random generator.
#[derive(Debug, Clone, PartialEq)]
pub enum HopSchedule {
    Explicit(Vec<Hop>),
    Generated(GeneratorSpec),
}

impl HopSchedule {
    pub fn empty() -> Self {
        HopSchedule::Explicit(Vec::new())
    }

    pub fn fixed(freq: f64) -> Self {
        HopSchedule::Explicit(vec![Hop {
            freq,
            dwell: f64::INFINITY,
        }])
    }

    /// Alternate through `freqs` with equal dwell, `repeat` times.
    pub fn alternating(freqs: &[f64], dwell: f64, repeat: usize) -> Self {
        let hops = (0..repeat)
            .flat_map(|_| freqs.iter().map(move |&freq| Hop { freq, dwell }))
            .collect();
        HopSchedule::Explicit(hops)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            HopSchedule::Explicit(hops) => {
                for (k, h) in hops.iter().enumerate() {
                    if !(h.freq > 0.0 && h.freq.is_finite()) {
                        return Err(Error::Config(format!("hop {k}: frequency must be > 0")));
                    }
                    if !(h.dwell > 0.0) {
                        return Err(Error::Config(format!("hop {k}: dwell must be > 0")));
                    }
                }
            }
            HopSchedule::Generated(g) => {
                if g.freq_set.is_empty() {
                    return Err(Error::Config("generator frequency set is empty".into()));
                }
                if g.freq_set.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
                    return Err(Error::Config("generator frequencies must be > 0".into()));
                }
                let (lo, hi) = g.dwell_range;
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return Err(Error::Config(format!(
                        "invalid dwell range [{lo:e}, {hi:e}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn max_frequency(&self) -> Option<f64> {
        let it: Box<dyn Iterator<Item = f64>> = match self {
            HopSchedule::Explicit(h) => Box::new(h.iter().map(|h| h.freq)),
            HopSchedule::Generated(g) => Box::new(g.freq_set.iter().copied()),
        };
        it.fold(None, |m, f| Some(m.map_or(f, |m: f64| m.max(f))))
    }

    pub fn frequencies(&self) -> Vec<f64> {
        let mut v: Vec<f64> = match self {
            HopSchedule::Explicit(h) => h.iter().map(|h| h.freq).collect(),
            HopSchedule::Generated(g) => g.freq_set.clone(),
        };
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn source(&self) -> HopSource {
        match self {
            HopSchedule::Explicit(h) => HopSource::Explicit { hops: h.clone(), next: 0 },
            HopSchedule::Generated(g) => HopSource::Generated(HopGenerator::new(g.clone())),
        }
    }

    /// Nominal phase-continuous segments covering `[0, t_end]`.
    pub fn segments_until(&self, t_end: f64) -> Vec<Segment> {
        let mut src = self.source();
        let mut out: Vec<Segment> = Vec::new();
        let mut start = 0.0;
        let mut phase = 0.0;
        while let Some(hop) = src.next_hop() {
            out.push(Segment {
                start,
                freq: hop.freq,
                phase0: phase,
            });
            phase = (phase + TAU * hop.freq * hop.dwell).rem_euclid(TAU);
            start += hop.dwell;
            if start > t_end || !start.is_finite() {
                break;
            }
        }
        out
    }

    /// Dump the schedule as `t_start_s,freq_hz` rows up to `t_end`.
    pub fn to_csv(&self, t_end: f64) -> String {
        let mut s = String::from("t_start_s,freq_hz\n");
        for seg in self.segments_until(t_end) {
            s.push_str(&format!("{:e},{:e}\n", seg.start, seg.freq));
        }
        s
    }
}

/// One phase-continuous stretch of constant transmitter frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub freq: f64,
    pub phase0: f64,
}

impl Segment {
    pub fn phase(&self, t: f64) -> f64 {
        self.phase0 + TAU * self.freq * (t - self.start)
    }
}

/// Seeded hop draw: uniform over the set excluding the previous frequency.
#[derive(Debug, Clone)]
pub struct HopGenerator {
    spec: GeneratorSpec,
    rng: ChaCha8Rng,
    prev: Option<usize>,
}

impl HopGenerator {
    pub fn new(spec: GeneratorSpec) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Self {
            spec,
            rng,
            prev: None,
        }
    }

    pub fn next_hop(&mut self) -> Hop {
        let n = self.spec.freq_set.len();
        let idx = match self.prev {
            Some(p) if n > 1 => {
                let k = self.rng.random_range(0..n - 1);
                if k >= p {
                    k + 1
                } else {
                    k
                }
            }
            _ => self.rng.random_range(0..n),
        };
        self.prev = Some(idx);
        let (lo, hi) = self.spec.dwell_range;
        let dwell = if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        };
        Hop {
            freq: self.spec.freq_set[idx],
            dwell,
        }
    }
}

#[derive(Debug, Clone)]
pub enum HopSource {
    Explicit { hops: Vec<Hop>, next: usize },
    Generated(HopGenerator),
}

impl HopSource {
    pub fn next_hop(&mut self) -> Option<Hop> {
        match self {
            HopSource::Explicit { hops, next } => {
                let h = hops.get(*next).copied();
                if h.is_some() {
                    *next += 1;
                }
                h
            }
            HopSource::Generated(g) => Some(g.next_hop()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopCause {
    Scheduled,
    Defense,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedHop {
    pub t: f64,
    pub freq: f64,
    pub cause: HopCause,
}

/// Stateful realization of a schedule inside a run; supports early hops.
#[derive(Debug, Clone)]
pub struct HopStream {
    source: HopSource,
    current: Option<Segment>,
    next_start: f64,
    pub realized: Vec<RealizedHop>,
}

impl HopStream {
    pub fn new(schedule: &HopSchedule) -> Self {
        let mut source = schedule.source();
        let mut realized = Vec::new();
        let (current, next_start) = match source.next_hop() {
            Some(h) => {
                realized.push(RealizedHop {
                    t: 0.0,
                    freq: h.freq,
                    cause: HopCause::Scheduled,
                });
                (
                    Some(Segment {
                        start: 0.0,
                        freq: h.freq,
                        phase0: 0.0,
                    }),
                    h.dwell,
                )
            }
            None => (None, f64::INFINITY),
        };
        Self {
            source,
            current,
            next_start,
            realized,
        }
    }

    pub fn segment(&self) -> Option<&Segment> {
        self.current.as_ref()
    }

    pub fn frequency(&self) -> f64 {
        self.current.map_or(0.0, |s| s.freq)
    }

    /// Take any scheduled hop due at step boundary `t` (step `dt`).
    pub fn advance(&mut self, t: f64, dt: f64) -> bool {
        if t + 0.5 * dt < self.next_start {
            return false;
        }
        let nominal = self.next_start;
        self.transition(t, nominal, HopCause::Scheduled)
    }

    /// Hop immediately at `t` (defense reaction).
    pub fn force_hop(&mut self, t: f64) -> bool {
        self.transition(t, t, HopCause::Defense)
    }

    fn transition(&mut self, t: f64, nominal: f64, cause: HopCause) -> bool {
        let Some(cur) = self.current else {
            self.next_start = f64::INFINITY;
            return false;
        };
        match self.source.next_hop() {
            Some(h) => {
                self.current = Some(Segment {
                    start: t,
                    freq: h.freq,
                    phase0: cur.phase(t).rem_euclid(TAU),
                });
                self.next_start = nominal + h.dwell;
                self.realized.push(RealizedHop {
                    t,
                    freq: h.freq,
                    cause,
                });
                true
            }
            None => {
                self.next_start = f64::INFINITY;
                false
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefenseConfig {
    pub enabled: bool,
    pub mismatch_threshold: f64,
    pub reaction_delay: f64,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            mismatch_threshold: 0.2,
            reaction_delay: 50e-6,
        }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mismatch_threshold > 0.0 && self.mismatch_threshold < 1.0) {
            return Err(Error::Config(
                "defense mismatch_threshold must lie in (0, 1)".into(),
            ));
        }
        if !(self.reaction_delay >= 0.0) {
            return Err(Error::Config("defense reaction_delay must be >= 0".into()));
        }
        Ok(())
    }
}

/// Flags a hop once the unexplained share of transmitted power stays above
/// threshold for the reaction delay.
#[derive(Debug, Clone)]
pub struct DefenseMonitor {
    pub config: DefenseConfig,
    over_since: Option<f64>,
}

impl DefenseMonitor {
    pub fn new(config: DefenseConfig) -> Self {
        Self {
            config,
            over_since: None,
        }
    }

    pub fn reset(&mut self) {
        self.over_since = None;
    }

    pub fn update(&mut self, p_transmitted: f64, p_authorized: f64, clock: f64) -> bool {
        defense_monitor(
            p_transmitted,
            p_authorized,
            &self.config,
            clock,
            &mut self.over_since,
        )
    }
}

pub fn defense_monitor(
    p_transmitted: f64,
    p_authorized_sum: f64,
    config: &DefenseConfig,
    clock: f64,
    over_since: &mut Option<f64>,
) -> bool {
    if !config.enabled || p_transmitted <= 0.0 {
        *over_since = None;
        return false;
    }
    let mismatch = (p_transmitted - p_authorized_sum) / p_transmitted;
    if mismatch > config.mismatch_threshold {
        let since = *over_since.get_or_insert(clock);
        clock - since >= config.reaction_delay
    } else {
        *over_since = None;
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(freqs: &[f64], seed: u64) -> HopGenerator {
        HopGenerator::new(GeneratorSpec {
            freq_set: freqs.to_vec(),
            dwell_range: (0.5e-3, 2e-3),
            seed,
        })
    }

    #[test]
    fn two_frequencies_alternate_strictly() {
        let mut g = gen(&[65e3, 125e3], 3);
        let seq: Vec<f64> = (0..50).map(|_| g.next_hop().freq).collect();
        for w in seq.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let mut a = gen(&[65e3, 90e3, 125e3], 42);
        let mut b = gen(&[65e3, 90e3, 125e3], 42);
        for _ in 0..200 {
            assert_eq!(a.next_hop(), b.next_hop());
        }
    }

    #[test]
    fn draws_are_balanced_and_in_range() {
        let set = [65e3, 90e3, 125e3];
        let mut g = gen(&set, 9);
        let mut counts = [0usize; 3];
        for _ in 0..1000 {
            let h = g.next_hop();
            assert!((0.5e-3..=2e-3).contains(&h.dwell));
            let i = set.iter().position(|f| *f == h.freq).unwrap();
            counts[i] += 1;
        }
        // chi-square against uniform, 2 dof, 99.9% critical value 13.8
        let chi: f64 = counts
            .iter()
            .map(|&c| (c as f64 - 1000.0 / 3.0).powi(2) / (1000.0 / 3.0))
            .sum();
        assert!(chi < 13.8, "chi2 = {chi}");
        for c in counts {
            let share = c as f64 / 1000.0;
            assert!((share - 1.0 / 3.0).abs() < 0.05, "share {share}");
        }
    }

    #[test]
    fn single_frequency_repeats() {
        let mut g = gen(&[80e3], 1);
        assert_eq!(g.next_hop().freq, 80e3);
        assert_eq!(g.next_hop().freq, 80e3);
    }

    #[test]
    fn defense_flags_after_delay_only() {
        let cfg = DefenseConfig {
            enabled: true,
            mismatch_threshold: 0.2,
            reaction_delay: 100e-6,
        };
        let mut m = DefenseMonitor::new(cfg);
        // attacker takes 65% of what is delivered
        assert!(!m.update(1.0, 0.35, 0.0));
        assert!(!m.update(1.0, 0.35, 50e-6));
        assert!(m.update(1.0, 0.35, 100e-6));
    }

    #[test]
    fn defense_ignores_short_mismatch_and_idle_transmitter() {
        let cfg = DefenseConfig {
            enabled: true,
            mismatch_threshold: 0.2,
            reaction_delay: 100e-6,
        };
        let mut m = DefenseMonitor::new(cfg);
        assert!(!m.update(1.0, 0.3, 0.0));
        assert!(!m.update(1.0, 0.3, 60e-6));
        assert!(!m.update(1.0, 0.95, 70e-6));
        assert!(!m.update(1.0, 0.3, 120e-6));
        assert!(!m.update(1.0, 0.3, 200e-6));
        assert!(!m.update(0.0, 0.0, 1.0));
        // honest losses below threshold never flag
        let mut h = DefenseMonitor::new(cfg);
        assert!((0..100).all(|k| !h.update(1.0, 0.9, k as f64 * 1e-5)));
    }

    #[test]
    fn stream_holds_last_frequency_and_stays_phase_continuous() {
        let sched = HopSchedule::Explicit(vec![
            Hop {
                freq: 65e3,
                dwell: 1e-4,
            },
            Hop {
                freq: 125e3,
                dwell: 1e-4,
            },
        ]);
        let mut s = HopStream::new(&sched);
        let dt = 1e-8;
        let mut t = 0.0;
        let mut k = 0u64;
        while t < 5e-4 {
            let before = s.segment().map(|g| g.phase(t));
            if s.advance(t, dt) {
                let after = s.segment().unwrap().phase(t);
                let d = (before.unwrap() - after).rem_euclid(TAU);
                assert!(d < 1e-9 || TAU - d < 1e-9);
            }
            k += 1;
            t = k as f64 * dt;
        }
        assert_eq!(s.frequency(), 125e3);
        assert_eq!(s.realized.len(), 2);
    }
}
