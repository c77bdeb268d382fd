//! Circuit models: stiff transmitter current source, fixed-resonance
//! receivers and the intruder's time-division switched-capacitor receiver.
//!
//! Every receiver is a series loop `L di/dt = e - v_c - R i` driven by the
//! induced EMF `e = M dI_T/dt`. The intruder's capacitor network is C_R1
//! permanently in the loop with C_R2 switched in parallel by S_R.

use std::f64::consts::TAU;

use crate::encryptor::{HopSchedule, Segment};
use crate::error::{Error, Result};

/// Upper bound on receivers in one plant.
pub const MAX_RECEIVERS: usize = 16;

/// Electrical constants of transmitter and intruder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub l_t: f64,
    pub l_r: f64,
    pub m_r: f64,
    pub c_r1: f64,
    pub c_r2: f64,
    pub r_load: f64,
    pub i_t_amplitude: f64,
    /// Forward drop of the switch path (V).
    pub delta_v_d: f64,
    /// On-resistance of the switch path (Ω); 0 selects ideal charge sharing.
    pub r_switch: f64,
}

impl SystemParams {
    /// 65-125 kHz bench setup: 45 µH transmitter, 38 µH receivers,
    /// 9 µH coupling, 22 nF / 147 nF network, 5 Ω loads.
    pub fn bench() -> Self {
        Self {
            l_t: 45e-6,
            l_r: 38e-6,
            m_r: 9e-6,
            c_r1: 22e-9,
            c_r2: 147e-9,
            r_load: 5.0,
            i_t_amplitude: 4.0,
            delta_v_d: 0.0,
            r_switch: 0.0,
        }
    }

    /// Wide-band (≈50-324 kHz) set: 150 µH transmitter, 80 µH receiver,
    /// 3 nF / 130 nF network. Coupling and load are not fixed by the
    /// original model; 15 µH and 30 Ω are used.
    pub fn wideband() -> Self {
        Self {
            l_t: 150e-6,
            l_r: 80e-6,
            m_r: 15e-6,
            c_r1: 3e-9,
            c_r2: 130e-9,
            r_load: 30.0,
            i_t_amplitude: 4.0,
            delta_v_d: 0.0,
            r_switch: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_t", self.l_t),
            ("l_r", self.l_r),
            ("m_r", self.m_r),
            ("c_r1", self.c_r1),
            ("c_r2", self.c_r2),
            ("r_load", self.r_load),
            ("i_t_amplitude", self.i_t_amplitude),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("delta_v_d", self.delta_v_d), ("r_switch", self.r_switch)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.m_r > (self.l_t * self.l_r).sqrt() {
            return Err(Error::Config(format!(
                "m_r = {:e} exceeds sqrt(l_t*l_r) = {:e}",
                self.m_r,
                (self.l_t * self.l_r).sqrt()
            )));
        }
        Ok(())
    }

    /// Resonance with the switch held open (C_R1 only).
    pub fn open_resonance(&self) -> f64 {
        resonant_frequency(self.l_r, self.c_r1)
    }

    /// Resonance with the switch held closed (C_R1 + C_R2).
    pub fn closed_resonance(&self) -> f64 {
        resonant_frequency(self.l_r, self.c_r1 + self.c_r2)
    }
}

pub fn resonant_frequency(l: f64, c: f64) -> f64 {
    1.0 / (TAU * (l * c).sqrt())
}

/// Authorized receiver with a permanent series capacitor.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedReceiver {
    pub name: String,
    pub l: f64,
    pub c: f64,
    pub r_load: f64,
    pub m: f64,
}

impl FixedReceiver {
    /// Receiver whose series capacitor resonates with `l` at `freq`.
    pub fn tuned(name: &str, freq: f64, l: f64, r_load: f64, m: f64) -> Self {
        Self {
            name: name.to_string(),
            l,
            c: 1.0 / ((TAU * freq).powi(2) * l),
            r_load,
            m,
        }
    }

    pub fn resonance(&self) -> f64 {
        resonant_frequency(self.l, self.c)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("l", self.l), ("c", self.c), ("r_load", self.r_load), ("m", self.m)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "receiver '{}': {field} must be finite and > 0, got {v}",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ReceiverState {
    pub i_r: f64,
    pub v_c1: f64,
    pub v_c2: f64,
    pub switch_closed: bool,
}

impl ReceiverState {
    pub fn is_finite(&self) -> bool {
        self.i_r.is_finite() && self.v_c1.is_finite() && self.v_c2.is_finite()
    }
}

/// Switch-side constants of a switched receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchedModel {
    pub l: f64,
    pub c1: f64,
    pub c2: f64,
    pub r_load: f64,
    pub r_switch: f64,
    pub delta_v_d: f64,
}

impl From<&SystemParams> for SwitchedModel {
    fn from(p: &SystemParams) -> Self {
        Self {
            l: p.l_r,
            c1: p.c_r1,
            c2: p.c_r2,
            r_load: p.r_load,
            r_switch: p.r_switch,
            delta_v_d: p.delta_v_d,
        }
    }
}

impl SwitchedModel {
    fn branch_current(&self, v1: f64, v2: f64) -> f64 {
        let dv = v1 - v2;
        if dv.abs() <= self.delta_v_d {
            0.0
        } else {
            (dv - self.delta_v_d * dv.signum()) / self.r_switch
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiverModel {
    Switched(SwitchedModel),
    Fixed { l: f64, c: f64, r_load: f64 },
}

impl ReceiverModel {
    fn inductance(&self) -> f64 {
        match self {
            ReceiverModel::Switched(s) => s.l,
            ReceiverModel::Fixed { l, .. } => *l,
        }
    }

    fn r_load(&self) -> f64 {
        match self {
            ReceiverModel::Switched(s) => s.r_load,
            ReceiverModel::Fixed { r_load, .. } => *r_load,
        }
    }

    /// (dv_c1/dt, dv_c2/dt) for loop current `i`.
    fn cap_rates(&self, i: f64, v1: f64, v2: f64, closed: bool) -> (f64, f64) {
        match self {
            ReceiverModel::Fixed { c, .. } => (i / c, 0.0),
            ReceiverModel::Switched(s) => {
                if !closed {
                    (i / s.c1, 0.0)
                } else if s.r_switch == 0.0 {
                    let d = i / (s.c1 + s.c2);
                    (d, d)
                } else {
                    let i2 = s.branch_current(v1, v2);
                    ((i - i2) / s.c1, i2 / s.c2)
                }
            }
        }
    }

    /// Power dissipated in the switch path.
    fn path_loss_rate(&self, st: &ReceiverState) -> f64 {
        match self {
            ReceiverModel::Switched(s) if st.switch_closed => {
                if s.r_switch == 0.0 {
                    s.delta_v_d * (st.i_r * s.c2 / (s.c1 + s.c2)).abs()
                } else {
                    let i2 = s.branch_current(st.v_c1, st.v_c2);
                    i2 * i2 * s.r_switch + s.delta_v_d * i2.abs()
                }
            }
            _ => 0.0,
        }
    }
}

/// Merge two capacitors at switch closure; returns (voltage, dissipated energy).
pub fn close_switch_charge_share(v_c1: f64, v_c2: f64, c_r1: f64, c_r2: f64) -> (f64, f64) {
    let v = (c_r1 * v_c1 + c_r2 * v_c2) / (c_r1 + c_r2);
    let loss = 0.5 * c_r1 * c_r2 / (c_r1 + c_r2) * (v_c1 - v_c2).powi(2);
    (v, loss)
}

/// Charge share that leaves `v_c1 - v_c2 = offset`; returns (v1, v2, loss).
fn share_with_offset(v1: f64, v2: f64, c1: f64, c2: f64, offset: f64) -> (f64, f64, f64) {
    let q = c1 * v1 + c2 * v2;
    let n1 = (q + c2 * offset) / (c1 + c2);
    let n2 = n1 - offset;
    let before = 0.5 * c1 * v1 * v1 + 0.5 * c2 * v2 * v2;
    let after = 0.5 * c1 * n1 * n1 + 0.5 * c2 * n2 * n2;
    (n1, n2, (before - after).max(0.0))
}

/// Coupled receiver loops sharing one transmitter field.
#[derive(Debug, Clone)]
pub struct Network {
    models: Vec<ReceiverModel>,
    /// Mutual inductance of each receiver to the transmitter.
    m: Vec<f64>,
    /// Inverse inductance matrix, row-major; `None` when uncoupled.
    l_inv: Option<Vec<f64>>,
    diode_sign: Vec<f64>,
}

type Rates = [[f64; 3]; MAX_RECEIVERS];

impl Network {
    pub fn new(models: Vec<ReceiverModel>, m: Vec<f64>, coupling: &[(usize, usize, f64)]) -> Result<Self> {
        let n = models.len();
        if n > MAX_RECEIVERS {
            return Err(Error::Config(format!("at most {MAX_RECEIVERS} receivers supported")));
        }
        let l_inv = if coupling.is_empty() {
            None
        } else {
            let mut l = vec![0.0; n * n];
            for (k, md) in models.iter().enumerate() {
                l[k * n + k] = md.inductance();
            }
            for &(a, b, mab) in coupling {
                if a >= n || b >= n || a == b {
                    return Err(Error::Config(format!("invalid coupling pair ({a}, {b})")));
                }
                l[a * n + b] = mab;
                l[b * n + a] = mab;
            }
            Some(invert(&l, n).ok_or_else(|| {
                Error::Config("receiver inductance matrix is singular".into())
            })?)
        };
        for md in &models {
            if let ReceiverModel::Switched(s) = md {
                if s.r_switch > 0.0 {
                    // RC time constant of the switch branch must be resolvable
                    let tau = s.r_switch * s.c1 * s.c2 / (s.c1 + s.c2);
                    if !(tau > 0.0) {
                        return Err(Error::Config("degenerate switch branch".into()));
                    }
                }
            }
        }
        Ok(Self {
            diode_sign: vec![0.0; n],
            models,
            m,
            l_inv,
        })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[ReceiverModel] {
        &self.models
    }

    /// Smallest RC constant of any resistive switch branch.
    pub fn min_switch_tau(&self) -> Option<f64> {
        self.models
            .iter()
            .filter_map(|m| match m {
                ReceiverModel::Switched(s) if s.r_switch > 0.0 => {
                    Some(s.r_switch * s.c1 * s.c2 / (s.c1 + s.c2))
                }
                _ => None,
            })
            .fold(None, |a, b| Some(a.map_or(b, |a: f64| a.min(b))))
    }

    fn rates(&self, emf_rate: f64, st: &[ReceiverState], y: &[[f64; 3]], out: &mut Rates) {
        let n = self.models.len();
        let mut u = [0.0; MAX_RECEIVERS];
        for k in 0..n {
            let md = &self.models[k];
            u[k] = self.m[k] * emf_rate - y[k][1] - md.r_load() * y[k][0];
        }
        for k in 0..n {
            let di = match &self.l_inv {
                None => u[k] / self.models[k].inductance(),
                Some(li) => (0..n).map(|j| li[k * n + j] * u[j]).sum(),
            };
            let (d1, d2) = self.models[k].cap_rates(y[k][0], y[k][1], y[k][2], st[k].switch_closed);
            out[k] = [di, d1, d2];
        }
    }

    /// Apply switch commands at a step boundary; returns dissipated energy per receiver.
    pub fn apply_switches(&mut self, st: &mut [ReceiverState], cmds: &[Option<bool>], losses: &mut [f64]) {
        for k in 0..self.models.len() {
            let ReceiverModel::Switched(s) = self.models[k] else {
                continue;
            };
            let want = cmds.get(k).copied().flatten().unwrap_or(st[k].switch_closed);
            let r = &mut st[k];
            if s.r_switch == 0.0 {
                let sign = if s.delta_v_d > 0.0 { r.i_r.signum() } else { 0.0 };
                let closing = want && !r.switch_closed;
                let flipped = want && r.switch_closed && sign != self.diode_sign[k] && s.delta_v_d > 0.0;
                if closing || flipped {
                    let (v1, v2, loss) =
                        share_with_offset(r.v_c1, r.v_c2, s.c1, s.c2, s.delta_v_d * sign);
                    r.v_c1 = v1;
                    r.v_c2 = v2;
                    losses[k] += loss;
                    self.diode_sign[k] = sign;
                }
            }
            r.switch_closed = want;
        }
    }

    /// One classical RK4 step with switch topology held constant.
    /// `emf_rate(t)` is dI_T/dt; returns path losses added to `losses`.
    pub fn integrate_step(
        &self,
        st: &mut [ReceiverState],
        emf_rate: &dyn Fn(f64) -> f64,
        t: f64,
        dt: f64,
        losses: &mut [f64],
    ) -> bool {
        let n = self.models.len();
        let mut y0 = [[0.0; 3]; MAX_RECEIVERS];
        for k in 0..n {
            y0[k] = [st[k].i_r, st[k].v_c1, st[k].v_c2];
        }
        let loss_before: [f64; MAX_RECEIVERS] =
            std::array::from_fn(|k| if k < n { self.models[k].path_loss_rate(&st[k]) } else { 0.0 });

        let e0 = emf_rate(t);
        let eh = emf_rate(t + 0.5 * dt);
        let e1 = emf_rate(t + dt);
        let mut k1 = [[0.0; 3]; MAX_RECEIVERS];
        let mut k2 = k1;
        let mut k3 = k1;
        let mut k4 = k1;
        let mut y = y0;
        self.rates(e0, st, &y0, &mut k1);
        for k in 0..n {
            for j in 0..3 {
                y[k][j] = y0[k][j] + 0.5 * dt * k1[k][j];
            }
        }
        self.rates(eh, st, &y, &mut k2);
        for k in 0..n {
            for j in 0..3 {
                y[k][j] = y0[k][j] + 0.5 * dt * k2[k][j];
            }
        }
        self.rates(eh, st, &y, &mut k3);
        for k in 0..n {
            for j in 0..3 {
                y[k][j] = y0[k][j] + dt * k3[k][j];
            }
        }
        self.rates(e1, st, &y, &mut k4);
        let mut finite = true;
        for k in 0..n {
            let mut out = [0.0; 3];
            for j in 0..3 {
                out[j] = y0[k][j] + dt / 6.0 * (k1[k][j] + 2.0 * k2[k][j] + 2.0 * k3[k][j] + k4[k][j]);
                finite &= out[j].is_finite();
            }
            st[k].i_r = out[0];
            st[k].v_c1 = out[1];
            st[k].v_c2 = match self.models[k] {
                ReceiverModel::Fixed { .. } => 0.0,
                _ => out[2],
            };
            let loss_after = self.models[k].path_loss_rate(&st[k]);
            losses[k] += 0.5 * (loss_before[k] + loss_after) * dt;
        }
        finite
    }
}

fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))?;
        if m[piv * n + col].abs() < 1e-300 {
            return None;
        }
        for j in 0..n {
            m.swap(col * n + j, piv * n + j);
            inv.swap(col * n + j, piv * n + j);
        }
        let p = m[col * n + col];
        for j in 0..n {
            m[col * n + j] /= p;
            inv[col * n + j] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r * n + col];
                if f != 0.0 {
                    for j in 0..n {
                        m[r * n + j] -= f * m[col * n + j];
                        inv[r * n + j] -= f * inv[col * n + j];
                    }
                }
            }
        }
    }
    Some(inv)
}

/// Assembled plant: transmitter, optional intruder and fixed receivers.
///
/// Receiver order everywhere (state, trace) is the intruder first when
/// present, then the fixed receivers in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub params: SystemParams,
    pub attacker: bool,
    pub fixed: Vec<FixedReceiver>,
    /// Receiver-to-receiver mutual inductances `(a, b, M)`, indices in receiver order.
    pub coupling: Vec<(usize, usize, f64)>,
}

pub const ATTACKER_NAME: &str = "attacker";

impl Plant {
    pub fn new(params: SystemParams) -> Self {
        Self {
            params,
            attacker: true,
            fixed: Vec::new(),
            coupling: Vec::new(),
        }
    }

    pub fn with_fixed(mut self, rx: FixedReceiver) -> Self {
        self.fixed.push(rx);
        self
    }

    pub fn without_attacker(mut self) -> Self {
        self.attacker = false;
        self
    }

    /// Bench plant with the 65 kHz and 125 kHz authorized receivers.
    pub fn bench() -> Self {
        let p = SystemParams::bench();
        Plant::new(p)
            .with_fixed(FixedReceiver::tuned("rx65", 65e3, p.l_r, p.r_load, p.m_r))
            .with_fixed(FixedReceiver::tuned("rx125", 125e3, p.l_r, p.r_load, p.m_r))
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        for f in &self.fixed {
            f.validate()?;
        }
        let mut names: Vec<&str> = self.fixed.iter().map(|f| f.name.as_str()).collect();
        if self.attacker {
            names.push(ATTACKER_NAME);
        }
        for (i, a) in names.iter().enumerate() {
            if a.is_empty() || a.contains(',') || a.contains('.') {
                return Err(Error::Config(format!("invalid receiver name '{a}'")));
            }
            if names[..i].contains(a) {
                return Err(Error::Config(format!("duplicate receiver name '{a}'")));
            }
        }
        Ok(())
    }

    pub fn receiver_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.attacker {
            v.push(ATTACKER_NAME.to_string());
        }
        v.extend(self.fixed.iter().map(|f| f.name.clone()));
        v
    }

    pub fn receiver_count(&self) -> usize {
        usize::from(self.attacker) + self.fixed.len()
    }

    pub fn models(&self) -> Vec<ReceiverModel> {
        let mut v = Vec::new();
        if self.attacker {
            v.push(ReceiverModel::Switched(SwitchedModel::from(&self.params)));
        }
        v.extend(self.fixed.iter().map(|f| ReceiverModel::Fixed {
            l: f.l,
            c: f.c,
            r_load: f.r_load,
        }));
        v
    }

    pub fn mutuals(&self) -> Vec<f64> {
        let mut v = Vec::new();
        if self.attacker {
            v.push(self.params.m_r);
        }
        v.extend(self.fixed.iter().map(|f| f.m));
        v
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(self.models(), self.mutuals(), &self.coupling)
    }

    pub fn load_resistances(&self) -> Vec<f64> {
        self.models().iter().map(|m| m.r_load()).collect()
    }
}

/// Transmitter current: stiff, load independent and phase continuous
/// across hops. Past the end of the schedule the last frequency is held.
pub fn transmitter_current(t: f64, schedule: &HopSchedule, amplitude: f64) -> f64 {
    match active_segment(t, schedule) {
        Some(seg) => amplitude * seg.phase(t).sin(),
        None => 0.0,
    }
}

pub fn active_segment(t: f64, schedule: &HopSchedule) -> Option<Segment> {
    let segs = schedule.segments_until(t);
    let idx = segs.partition_point(|s| s.start <= t);
    if idx == 0 {
        None
    } else {
        Some(segs[idx - 1])
    }
}

fn single(model: ReceiverModel) -> Network {
    Network::new(vec![model], vec![1.0], &[]).expect("single receiver network")
}

/// Advance the intruder's receiver by one step; `emf(t)` is the induced
/// EMF. Returns the new state and energy dissipated in the switch.
pub fn step_attacker_receiver(
    state: ReceiverState,
    t: f64,
    emf: &dyn Fn(f64) -> f64,
    switch_cmd: bool,
    params: &SystemParams,
    dt: f64,
) -> Result<(ReceiverState, f64)> {
    let mut net = single(ReceiverModel::Switched(SwitchedModel::from(params)));
    step_single(&mut net, state, t, emf, Some(switch_cmd), dt)
}

pub fn step_fixed_receiver(
    state: ReceiverState,
    t: f64,
    emf: &dyn Fn(f64) -> f64,
    rx: &FixedReceiver,
    dt: f64,
) -> Result<ReceiverState> {
    let mut net = single(ReceiverModel::Fixed {
        l: rx.l,
        c: rx.c,
        r_load: rx.r_load,
    });
    step_single(&mut net, state, t, emf, None, dt).map(|(s, _)| s)
}

fn step_single(
    net: &mut Network,
    state: ReceiverState,
    t: f64,
    emf: &dyn Fn(f64) -> f64,
    cmd: Option<bool>,
    dt: f64,
) -> Result<(ReceiverState, f64)> {
    if !state.is_finite() {
        return Err(Error::Divergence { step: 0, t });
    }
    let mut st = [state];
    let mut loss = [0.0];
    net.apply_switches(&mut st, &[cmd], &mut loss);
    if !net.integrate_step(&mut st, emf, t, dt, &mut loss) {
        return Err(Error::Divergence { step: 0, t });
    }
    Ok((st[0], loss[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{series_rlc_current, steady_fundamental};

    #[test]
    fn wideband_switch_extremes() {
        let p = SystemParams::wideband();
        assert!((p.open_resonance() - 324.9e3).abs() / 324.9e3 < 5e-3);
        assert!((p.closed_resonance() - 48.8e3).abs() / 48.8e3 < 5e-3);
    }

    #[test]
    fn charge_share_examples() {
        let (v, loss) = close_switch_charge_share(5.0, 5.0, 22e-9, 147e-9);
        assert!((v - 5.0).abs() < 1e-12 && loss == 0.0);
        let (v, _) = close_switch_charge_share(1.0, 0.0, 10e-9, 10e-9);
        assert!((v - 0.5).abs() < 1e-15);
        let (v, loss) = close_switch_charge_share(1.0, 0.0, 22e-9, 147e-9);
        assert!((v - 0.1302).abs() < 1e-4);
        // charge conserved
        assert!((22e-9 * 1.0 - 169e-9 * v).abs() < 1e-20);
        let e_before = 0.5 * 22e-9;
        let e_after = 0.5 * 169e-9 * v * v;
        assert!((e_before - e_after - loss).abs() < 1e-20);
    }

    #[test]
    fn zero_drive_stays_zero() {
        let p = SystemParams::bench();
        let mut s = ReceiverState::default();
        for k in 0..1000 {
            let (n, loss) = step_attacker_receiver(s, k as f64 * 1e-8, &|_| 0.0, k % 2 == 0, &p, 1e-8).unwrap();
            assert_eq!(loss, 0.0);
            s = n;
        }
        assert_eq!((s.i_r, s.v_c1, s.v_c2), (0.0, 0.0, 0.0));
    }

    fn drive_switched(p: &SystemParams, f: f64, closed: bool, cycles: f64) -> (f64, f64) {
        let dt = 10e-9;
        let e_amp = 1.0;
        let w = TAU * f;
        let emf = move |t: f64| e_amp * (w * t).cos();
        let mut s = ReceiverState::default();
        let n = (cycles / f / dt) as usize;
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            let t = k as f64 * dt;
            samples.push(s.i_r);
            s = step_attacker_receiver(s, t, &emf, closed, p, dt).unwrap().0;
        }
        steady_fundamental(&samples, dt, f, 20)
    }

    #[test]
    fn open_switch_at_open_resonance_is_resistive() {
        let p = SystemParams::bench();
        let f = p.open_resonance();
        let (amp, _) = drive_switched(&p, f, false, 200.0);
        let expect = series_rlc_current(1.0, f, p.l_r, p.c_r1, p.r_load).norm();
        assert!((expect - 1.0 / p.r_load).abs() < 1e-12);
        assert!((amp - expect).abs() / expect < 5e-3, "{amp} vs {expect}");
    }

    #[test]
    fn closed_switch_at_parallel_resonance_is_resistive() {
        let p = SystemParams::bench();
        let f = p.closed_resonance();
        let (amp, _) = drive_switched(&p, f, true, 200.0);
        assert!((amp - 1.0 / p.r_load).abs() * p.r_load < 5e-3, "{amp}");
    }

    #[test]
    fn coupled_network_inverse_is_consistent() {
        let l = [2.0, 0.5, 0.5, 1.0];
        let inv = invert(&l, 2).unwrap();
        let prod00 = l[0] * inv[0] + l[1] * inv[2];
        let prod01 = l[0] * inv[1] + l[1] * inv[3];
        assert!((prod00 - 1.0).abs() < 1e-12 && prod01.abs() < 1e-12);
    }

    #[test]
    fn transmitter_waveform_basics() {
        let s = HopSchedule::fixed(65e3);
        assert_eq!(transmitter_current(0.0, &s, 4.0), 0.0);
        let q = 0.25 / 65e3;
        assert!((transmitter_current(q, &s, 4.0) - 4.0).abs() < 1e-9);
        assert_eq!(transmitter_current(1e-3, &HopSchedule::empty(), 4.0), 0.0);
    }

    #[test]
    fn transmitter_is_continuous_across_hop() {
        let s = HopSchedule::alternating(&[65e3, 125e3], 1.03e-4, 2);
        let t0 = 1.03e-4;
        for eps in [1e-9, 1e-10, 1e-11] {
            let left = transmitter_current(t0 - eps, &s, 4.0);
            let right = transmitter_current(t0 + eps, &s, 4.0);
            // slope bound: |dI/dt| <= A*2*pi*f_max
            assert!((left - right).abs() <= 2.0 * eps * 4.0 * TAU * 125e3 * 1.01);
        }
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = SystemParams::bench();
        p.c_r1 = -1e-9;
        assert!(p.validate().is_err());
        let mut p = SystemParams::bench();
        p.m_r = 1e-3;
        assert!(p.validate().is_err());
        assert!(SystemParams::bench().validate().is_ok());
    }
}
