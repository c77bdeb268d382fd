//! Fixed-step RK4 engine that advances a plant and an optional switch
//! controller in lockstep and records a [`Trace`].

mod edges;
mod trace;

pub use edges::{
    detect_zero_cross, detect_zero_cross_from, EdgeEvent, EdgeKind, Hysteresis, SignalSource,
    ZeroCrossDetector,
};
pub use trace::{ControllerMode, ControllerTrace, ReceiverKind, ReceiverTrace, Trace};

use std::f64::consts::TAU;

use crate::encryptor::{DefenseConfig, DefenseMonitor, HopSchedule, HopStream, RealizedHop};
use crate::error::{Error, Result};
use crate::plant::{Network, Plant, ReceiverModel, ReceiverState};

/// Minimum integration steps per period of the fastest scheduled frequency.
pub const MIN_STEPS_PER_PERIOD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub seed: u64,
    pub record_decimation: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 10e-9,
            duration: 1e-3,
            seed: 0,
            record_decimation: 1,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64) -> Self {
        Self {
            dt,
            duration,
            ..Self::default()
        }
    }

    pub fn with_decimation(mut self, k: usize) -> Self {
        self.record_decimation = k;
        self
    }

    pub fn validate(&self, max_freq: Option<f64>) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {:e}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config(format!("duration must be > 0, got {:e}", self.duration)));
        }
        if self.record_decimation == 0 {
            return Err(Error::Config("record_decimation must be >= 1".into()));
        }
        if let Some(f) = max_freq {
            if self.dt > 1.0 / (MIN_STEPS_PER_PERIOD * f) {
                return Err(Error::Config(format!(
                    "dt = {:e} s gives fewer than {MIN_STEPS_PER_PERIOD} steps per period at {f:.0} Hz",
                    self.dt
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}

/// Which signals of the intruder's receiver a controller may read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Taps {
    pub v_c1: bool,
    pub v_load: bool,
    /// Transmitter current; a lab-calibration oracle, not available in the field.
    pub i_t: bool,
}

/// Samples handed to a controller; undeclared taps are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub v_c1: Option<f64>,
    pub v_load: Option<f64>,
    pub i_t: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Telemetry {
    pub mode: Option<ControllerMode>,
    pub f_estimate: f64,
    pub t_on: f64,
}

/// Drives the intruder's switch. Called once per step; the returned
/// command (true = closed) holds for the following step.
pub trait SwitchController {
    fn taps(&self) -> Taps;
    fn step(&mut self, obs: &Observation) -> bool;
    fn telemetry(&self) -> Telemetry {
        Telemetry::default()
    }
}

/// Holds the switch in one position.
#[derive(Debug, Clone, Copy)]
pub struct ConstantSwitch(pub bool);

impl SwitchController for ConstantSwitch {
    fn taps(&self) -> Taps {
        Taps::default()
    }

    fn step(&mut self, _obs: &Observation) -> bool {
        self.0
    }
}

/// Output of a full run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    pub hops: Vec<RealizedHop>,
    /// Total energy dissipated in switching per receiver (J), receiver order.
    pub switching_energy: Vec<f64>,
}

/// Run a plant against a schedule with an optional controller on the
/// intruder's switch.
pub fn run(
    plant: &Plant,
    controller: Option<&mut dyn SwitchController>,
    schedule: &HopSchedule,
    config: &SimConfig,
) -> Result<Trace> {
    let mut sim = Simulation::new(plant, schedule, *config);
    if let Some(c) = controller {
        sim = sim.controller(c);
    }
    sim.run().map(|o| o.trace)
}

/// Builder form of [`run`] with the optional defense monitor.
pub struct Simulation<'a> {
    plant: &'a Plant,
    schedule: &'a HopSchedule,
    config: SimConfig,
    controller: Option<&'a mut dyn SwitchController>,
    defense: DefenseConfig,
}

struct PowerWindow {
    len: usize,
    buf: Vec<(f64, f64)>,
    pos: usize,
    sum: (f64, f64),
    filled: bool,
}

impl PowerWindow {
    fn new() -> Self {
        Self {
            len: 0,
            buf: Vec::new(),
            pos: 0,
            sum: (0.0, 0.0),
            filled: false,
        }
    }

    fn reset(&mut self, len: usize) {
        self.len = len.max(1);
        self.buf.clear();
        self.buf.resize(self.len, (0.0, 0.0));
        self.pos = 0;
        self.sum = (0.0, 0.0);
        self.filled = false;
    }

    fn push(&mut self, v: (f64, f64)) {
        let old = self.buf[self.pos];
        self.sum.0 += v.0 - old.0;
        self.sum.1 += v.1 - old.1;
        self.buf[self.pos] = v;
        self.pos += 1;
        if self.pos == self.len {
            self.pos = 0;
            self.filled = true;
        }
    }

    fn mean(&self) -> Option<(f64, f64)> {
        self.filled
            .then(|| (self.sum.0 / self.len as f64, self.sum.1 / self.len as f64))
    }
}

impl<'a> Simulation<'a> {
    pub fn new(plant: &'a Plant, schedule: &'a HopSchedule, config: SimConfig) -> Self {
        Self {
            plant,
            schedule,
            config,
            controller: None,
            defense: DefenseConfig::default(),
        }
    }

    pub fn controller(mut self, c: &'a mut dyn SwitchController) -> Self {
        self.controller = Some(c);
        self
    }

    pub fn defense(mut self, d: DefenseConfig) -> Self {
        self.defense = d;
        self
    }

    pub fn run(self) -> Result<RunOutput> {
        let Simulation {
            plant,
            schedule,
            config,
            mut controller,
            defense,
        } = self;
        plant.validate()?;
        schedule.validate()?;
        config.validate(schedule.max_frequency())?;
        if defense.enabled {
            defense.validate()?;
        }
        if controller.is_some() && !plant.attacker {
            return Err(Error::Config("controller given but plant has no intruder receiver".into()));
        }

        let mut net: Network = plant.network()?;
        if let Some(tau) = net.min_switch_tau() {
            if config.dt / tau > 2.5 {
                return Err(Error::Config(format!(
                    "switch branch time constant {tau:e} s too stiff for dt = {:e} s",
                    config.dt
                )));
            }
        }
        let names = plant.receiver_names();
        let n = names.len();
        let r_load = plant.load_resistances();
        let mutuals = plant.mutuals();
        let amp = plant.params.i_t_amplitude;
        let dt = config.dt;
        let dec = config.record_decimation;
        let steps = config.steps();

        let mut stream = HopStream::new(schedule);
        let mut monitor = DefenseMonitor::new(defense);
        let mut window = PowerWindow::new();
        let mut window_freq = f64::NAN;

        let mut state = vec![ReceiverState::default(); n];
        let mut losses = vec![0.0; n];
        let mut cmds: Vec<Option<bool>> = vec![None; n];
        let taps = controller.as_ref().map(|c| c.taps()).unwrap_or_default();

        let capacity = (steps / dec as u64 + 1) as usize;
        let mut trace = Trace {
            sample_dt: dt * dec as f64,
            t: Vec::with_capacity(capacity),
            i_t: Vec::with_capacity(capacity),
            f_t_active: Vec::with_capacity(capacity),
            receivers: names
                .iter()
                .zip(net.models())
                .map(|(name, m)| {
                    let kind = match m {
                        ReceiverModel::Switched(_) => ReceiverKind::Switched,
                        ReceiverModel::Fixed { .. } => ReceiverKind::Fixed,
                    };
                    let mut r = ReceiverTrace::new(name, kind);
                    r.i_r.reserve(capacity);
                    r.v_c1.reserve(capacity);
                    r.v_c2.reserve(capacity);
                    r.v_load.reserve(capacity);
                    r.switch_closed.reserve(capacity);
                    r.e_switch.reserve(capacity);
                    r
                })
                .collect(),
            controller: controller.as_ref().map(|_| ControllerTrace::default()),
        };

        for k in 0..=steps {
            let t = k as f64 * dt;
            if k > 0 {
                stream.advance(t, dt);
            }
            let seg = stream.segment().copied();
            let (i_t, di_t) = match seg {
                Some(s) => {
                    let ph = s.phase(t);
                    (amp * ph.sin(), amp * TAU * s.freq * ph.cos())
                }
                None => (0.0, 0.0),
            };

            if let Some(c) = controller.as_mut() {
                let a = &state[0];
                let obs = Observation {
                    t,
                    v_c1: taps.v_c1.then_some(a.v_c1),
                    v_load: taps.v_load.then_some(a.i_r * r_load[0]),
                    i_t: taps.i_t.then_some(i_t),
                };
                cmds[0] = Some(c.step(&obs));
            }
            net.apply_switches(&mut state, &cmds, &mut losses);

            if k % dec as u64 == 0 {
                trace.t.push(t);
                trace.i_t.push(i_t);
                trace.f_t_active.push(stream.frequency());
                for (j, r) in trace.receivers.iter_mut().enumerate() {
                    let s = &state[j];
                    r.i_r.push(s.i_r);
                    r.v_c1.push(s.v_c1);
                    r.v_c2.push(s.v_c2);
                    r.v_load.push(s.i_r * r_load[j]);
                    r.switch_closed.push(s.switch_closed);
                    r.e_switch.push(losses[j]);
                }
                if let (Some(ct), Some(c)) = (trace.controller.as_mut(), controller.as_ref()) {
                    let tm = c.telemetry();
                    ct.mode.push(tm.mode);
                    ct.f_estimate_hz.push(tm.f_estimate);
                    ct.t_on_s.push(tm.t_on);
                }
            }

            if defense.enabled {
                let f = stream.frequency();
                if f != window_freq {
                    window_freq = f;
                    monitor.reset();
                    window.reset(if f > 0.0 { (1.0 / (f * dt)).round() as usize } else { 1 });
                }
                let mut p_tx = 0.0;
                let mut p_auth = 0.0;
                for j in 0..n {
                    p_tx += mutuals[j] * di_t * state[j].i_r;
                    if matches!(net.models()[j], ReceiverModel::Fixed { .. }) {
                        p_auth += state[j].i_r * state[j].i_r * r_load[j];
                    }
                }
                window.push((p_tx, p_auth));
                if let Some((ptx, pa)) = window.mean() {
                    if monitor.update(ptx, pa, t) && k < steps {
                        stream.force_hop(t);
                        monitor.reset();
                        window_freq = f64::NAN;
                    }
                }
            }

            if k == steps {
                break;
            }
            let drive = |tau: f64| match seg {
                Some(s) => amp * TAU * s.freq * s.phase(tau).cos(),
                None => 0.0,
            };
            if !net.integrate_step(&mut state, &drive, t, dt, &mut losses) {
                return Err(Error::Divergence { step: k, t });
            }
        }

        Ok(RunOutput {
            trace,
            hops: stream.realized,
            switching_energy: losses,
        })
    }
}
