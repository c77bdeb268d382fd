//! Scenario files.
//!
//! A scenario is plain text made of `[section]` headers followed by
//! `key = value` lines. `#` starts a comment. Quantities take an optional
//! SI prefix and unit (`22nF`, `1.5ms`, `65kHz`, `5ohm`); a bare number is
//! read in base units. Lists are comma separated. Sections:
//!
//! - `[scenario]` name
//! - `[plant]` preset (bench | wideband), l_t, l_r, m_r, c_r1, c_r2,
//!   r_load, i_t_amplitude, delta_v_d, r_switch
//! - `[receiver NAME]` tuned or c, plus optional l, r_load, m
//! - `[coupling]` `a:b = M` between two named receivers
//! - `[attacker]` enabled, table, calibrate, and every controller setting
//! - `[schedule]` one of hops (`65kHz@1ms, ...`), alternate + dwell + repeat,
//!   or freq_set + dwell_min + dwell_max + seed
//! - `[defense]` enabled, mismatch_threshold, reaction_delay
//! - `[sim]` dt, duration, seed, decimation
//! - `[output]` dir

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::design::{achievable_band, build_frequency_table, calibrate_entry, FrequencyTableEntry, SenseMode};
use crate::encryptor::{DefenseConfig, GeneratorSpec, Hop, HopSchedule};
use crate::error::{Error, Result};
use crate::harness::metrics::{analyze, Metrics};
use crate::interceptor::{ControllerConfig, ControllerEvent, Interceptor};
use crate::plant::{FixedReceiver, Plant, SystemParams};
use crate::sim::{RunOutput, SimConfig, Simulation};

pub const TABLE3_SCENARIO: &str = include_str!("../../../../scenarios/table3.scenario");

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSpec {
    pub config: ControllerConfig,
    /// Frequencies memorized in advance.
    pub table_freqs: Vec<f64>,
    pub calibrate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: Plant,
    pub attacker: Option<AttackerSpec>,
    pub schedule: HopSchedule,
    pub defense: DefenseConfig,
    pub sim: SimConfig,
    /// Output directory relative to the run's output root.
    pub output_dir: PathBuf,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub name: String,
    pub output: RunOutput,
    pub metrics: Metrics,
    pub table: Vec<FrequencyTableEntry>,
    pub events: Vec<ControllerEvent>,
    pub schedule_csv: String,
}

impl Scenario {
    pub fn table3() -> Self {
        Self::parse(TABLE3_SCENARIO).expect("bundled scenario parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let doc = Document::parse(text)?;
        let mut name = "scenario".to_string();
        let mut params = None;
        let mut fixed = Vec::new();
        let mut attacker = None;
        let mut schedule = None;
        let mut defense = DefenseConfig::default();
        let mut sim = None;
        let mut output_dir = None;
        let mut coupling = Vec::new();

        for sec in &doc.sections {
            let mut s = SectionReader::new(sec);
            match (sec.kind.as_str(), sec.arg.as_deref()) {
                ("scenario", None) => {
                    if let Some(v) = s.text("name")? {
                        name = v;
                    }
                }
                ("plant", None) => params = Some(read_plant(&mut s)?),
                ("receiver", Some(rx)) => fixed.push((rx.to_string(), sec.line, read_receiver_fields(&mut s)?)),
                ("coupling", None) => {
                    for (key, e) in std::mem::take(&mut s.entries) {
                        let (a, b) = key
                            .split_once(':')
                            .ok_or_else(|| parse_err(e.line, format!("coupling key '{key}' must be a:b")))?;
                        let m = quantity(&e.value, "H").map_err(|m| parse_err(e.line, format!("{key}: {m}")))?;
                        coupling.push((a.trim().to_string(), b.trim().to_string(), m, e.line));
                    }
                }
                ("attacker", None) => attacker = read_attacker(&mut s)?,
                ("schedule", None) => schedule = Some(read_schedule(&mut s)?),
                ("defense", None) => defense = read_defense(&mut s)?,
                ("sim", None) => sim = Some(read_sim(&mut s)?),
                ("output", None) => output_dir = s.text("dir")?.map(PathBuf::from),
                (kind, arg) => {
                    let shown = arg.map_or(kind.to_string(), |a| format!("{kind} {a}"));
                    return Err(parse_err(sec.line, format!("unknown section [{shown}]")));
                }
            }
            s.finish()?;
        }

        let params = params.ok_or_else(|| parse_err(0, "missing [plant] section".into()))?;
        let schedule = schedule.ok_or_else(|| parse_err(0, "missing [schedule] section".into()))?;
        let mut plant = Plant::new(params);
        if attacker.is_none() {
            plant = plant.without_attacker();
        }
        for (rx, line, f) in fixed {
            plant = plant.with_fixed(f.build(&rx, &params).map_err(|m| parse_err(line, m))?);
        }
        let names = plant.receiver_names();
        for (a, b, m, line) in coupling {
            let idx = |n: &str| {
                names
                    .iter()
                    .position(|x| x == n)
                    .ok_or_else(|| parse_err(line, format!("coupling names unknown receiver '{n}'")))
            };
            plant.coupling.push((idx(&a)?, idx(&b)?, m));
        }
        plant.validate()?;

        let sim = sim.unwrap_or_default();
        let duration = match (sim.duration, &schedule) {
            (Some(d), _) => d,
            (None, HopSchedule::Explicit(h)) if h.iter().all(|h| h.dwell.is_finite()) => {
                h.iter().map(|h| h.dwell).sum()
            }
            _ => return Err(parse_err(0, "[sim] duration is required for this schedule".into())),
        };
        let schedule = match schedule {
            HopSchedule::Generated(mut g) if g.seed == u64::MAX => {
                g.seed = sim.seed.unwrap_or(0);
                HopSchedule::Generated(g)
            }
            s => s,
        };
        let mut sim_config = SimConfig::new(sim.dt.unwrap_or(10e-9), duration);
        sim_config.seed = sim.seed.unwrap_or(0);
        sim_config.record_decimation = sim.decimation.unwrap_or(1);

        schedule.validate()?;
        defense.validate()?;
        sim_config.validate(schedule.max_frequency())?;

        let mut warnings = Vec::new();
        if let Some(a) = &attacker {
            let (lo, hi) = achievable_band(params.l_r, params.c_r1, params.c_r2);
            a.config.validate(Some(lo))?;
            for f in schedule.frequencies() {
                if f < lo || f > hi {
                    warnings.push(format!(
                        "schedule frequency {f:.0} Hz lies outside the attacker band [{lo:.0}, {hi:.0}] Hz"
                    ));
                }
            }
            for &f in &a.table_freqs {
                if f < lo || f > hi {
                    return Err(Error::OutOfBand { freq: f, f_min: lo, f_max: hi });
                }
            }
        }

        let output_dir = output_dir.unwrap_or_else(|| PathBuf::from(&name));
        Ok(Scenario {
            name,
            plant,
            attacker,
            schedule,
            defense,
            sim: sim_config,
            output_dir,
            warnings,
        })
    }

    /// The attacker's memorized table, calibrated when the scenario asks for it.
    pub fn build_table(&self) -> Result<Vec<FrequencyTableEntry>> {
        let Some(a) = &self.attacker else {
            return Ok(Vec::new());
        };
        let p = &self.plant.params;
        let table = build_frequency_table(&a.table_freqs, p.l_r, p.c_r1, p.c_r2)?;
        if !a.calibrate {
            return Ok(table);
        }
        table
            .iter()
            .map(|e| calibrate_entry(e, p, &a.config, self.sim.dt))
            .collect()
    }

    pub fn run(&self) -> Result<ScenarioRun> {
        let table = self.build_table()?;
        let mut ctl = self
            .attacker
            .as_ref()
            .map(|a| Interceptor::new(a.config.clone(), self.plant.params, table.clone()));
        let mut sim = Simulation::new(&self.plant, &self.schedule, self.sim).defense(self.defense);
        if let Some(c) = ctl.as_mut() {
            sim = sim.controller(c);
        }
        let output = sim.run()?;
        let metrics = analyze(&output.trace)?;
        let mut schedule_csv = String::from("t_start_s,freq_hz\n");
        for h in &output.hops {
            schedule_csv.push_str(&format!("{:e},{:e}\n", h.t, h.freq));
        }
        Ok(ScenarioRun {
            name: self.name.clone(),
            output,
            metrics,
            table: ctl.as_ref().map_or(table, |c| c.table.clone()),
            events: ctl.map(|c| c.events).unwrap_or_default(),
            schedule_csv,
        })
    }
}

fn parse_err(line: usize, msg: String) -> Error {
    Error::Parse { line, msg }
}

/// Parse a quantity in `unit`, accepting an SI prefix.
pub fn quantity(text: &str, unit: &str) -> std::result::Result<f64, String> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || ((c == '+' || c == '-') && (i == 0 || matches!(t.as_bytes()[i - 1], b'e' | b'E')))
                || ((c == 'e' || c == 'E') && t[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map_or(t.len(), |(i, _)| i);
    let (num, suffix) = t.split_at(split);
    let mut v: f64 = num.parse().map_err(|_| format!("'{t}' is not a number"))?;
    let suffix = suffix.trim();
    let unit_ok = |u: &str| u == unit || (unit == "ohm" && u == "Ω");
    if !(suffix.is_empty() || unit_ok(suffix)) {
        let mut chars = suffix.chars();
        let exp = match chars.next().unwrap() {
            'p' => -12,
            'n' => -9,
            'u' | 'µ' | 'μ' => -6,
            'm' => -3,
            'k' => 3,
            'M' => 6,
            'G' => 9,
            _ => return Err(format!("'{t}': expected unit '{unit}'")),
        };
        if !unit_ok(chars.as_str()) {
            return Err(format!("'{t}': expected unit '{unit}'"));
        }
        // Shift the decimal exponent so `22n` reads exactly as `22e-9`.
        v = match num.split_once(['e', 'E']) {
            Some((m, e)) => {
                let e: i32 = e.parse().map_err(|_| format!("'{t}' is not a number"))?;
                format!("{m}e{}", e + exp).parse()
            }
            None => format!("{num}e{exp}").parse(),
        }
        .map_err(|_| format!("'{t}' is not a number"))?;
    }
    if !v.is_finite() {
        return Err(format!("'{t}' is not finite"));
    }
    Ok(v)
}

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug)]
struct Section {
    kind: String,
    arg: Option<String>,
    line: usize,
    entries: Vec<(String, Entry)>,
}

struct Document {
    sections: Vec<Section>,
}

impl Document {
    fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.split('#').next().unwrap().trim();
            if l.is_empty() {
                continue;
            }
            if let Some(h) = l.strip_prefix('[') {
                let h = h
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line, "unterminated section header".into()))?
                    .trim();
                let mut it = h.splitn(2, char::is_whitespace);
                let kind = it.next().unwrap_or("").to_string();
                let arg = it.next().map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
                if kind != "receiver" && sections.iter().any(|s| s.kind == kind) {
                    return Err(parse_err(line, format!("duplicate section [{kind}]")));
                }
                if kind == "receiver" && arg.is_none() {
                    return Err(parse_err(line, "[receiver] needs a name".into()));
                }
                sections.push(Section {
                    kind,
                    arg,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (k, v) = l
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected key = value, got '{l}'")))?;
            let sec = sections
                .last_mut()
                .ok_or_else(|| parse_err(line, "key outside any section".into()))?;
            let key = k.trim().to_string();
            if sec.entries.iter().any(|(x, _)| *x == key) {
                return Err(parse_err(line, format!("duplicate key '{key}'")));
            }
            sec.entries.push((
                key,
                Entry {
                    value: v.trim().to_string(),
                    line,
                },
            ));
        }
        Ok(Document { sections })
    }
}

/// Hands out keys once; leftovers are unknown keys.
struct SectionReader {
    line: usize,
    name: String,
    entries: BTreeMap<String, Entry>,
}

impl SectionReader {
    fn new(sec: &Section) -> Self {
        let entries = sec
            .entries
            .iter()
            .map(|(k, e)| {
                (
                    k.clone(),
                    Entry {
                        value: e.value.clone(),
                        line: e.line,
                    },
                )
            })
            .collect();
        Self {
            line: sec.line,
            name: sec.kind.clone(),
            entries,
        }
    }

    fn raw(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn text(&mut self, key: &str) -> Result<Option<String>> {
        Ok(self.raw(key).map(|e| e.value))
    }

    fn quantity(&mut self, key: &str, unit: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => quantity(&e.value, unit)
                .map(Some)
                .map_err(|m| parse_err(e.line, format!("{key}: {m}"))),
        }
    }

    fn positive(&mut self, key: &str, unit: &str) -> Result<Option<f64>> {
        let line = self.entries.get(key).map_or(self.line, |e| e.line);
        match self.quantity(key, unit)? {
            Some(v) if v <= 0.0 => Err(parse_err(line, format!("{key} must be > 0, got {v:e}"))),
            v => Ok(v),
        }
    }

    fn non_negative(&mut self, key: &str, unit: &str) -> Result<Option<f64>> {
        let line = self.entries.get(key).map_or(self.line, |e| e.line);
        match self.quantity(key, unit)? {
            Some(v) if v < 0.0 => Err(parse_err(line, format!("{key} must be >= 0, got {v:e}"))),
            v => Ok(v),
        }
    }

    fn list(&mut self, key: &str, unit: &str) -> Result<Option<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|x| quantity(x, unit).map_err(|m| parse_err(e.line, format!("{key}: {m}"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => match e.value.as_str() {
                "true" | "on" | "yes" => Ok(Some(true)),
                "false" | "off" | "no" => Ok(Some(false)),
                v => Err(parse_err(e.line, format!("{key}: expected on/off, got '{v}'"))),
            },
        }
    }

    fn integer(&mut self, key: &str) -> Result<Option<u64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse()
                .map(Some)
                .map_err(|_| parse_err(e.line, format!("{key}: '{}' is not a non-negative integer", e.value))),
        }
    }

    fn require<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| parse_err(self.line, format!("[{}] missing required key '{key}'", self.name)))
    }

    fn finish(self) -> Result<()> {
        match self.entries.iter().min_by_key(|(_, e)| e.line) {
            Some((k, e)) => Err(parse_err(e.line, format!("unknown key '{k}' in [{}]", self.name))),
            None => Ok(()),
        }
    }
}

fn read_plant(s: &mut SectionReader) -> Result<SystemParams> {
    let base = match s.raw("preset") {
        None => None,
        Some(e) => match e.value.as_str() {
            "bench" => Some(SystemParams::bench()),
            "wideband" => Some(SystemParams::wideband()),
            v => return Err(parse_err(e.line, format!("unknown preset '{v}'"))),
        },
    };
    let mut get = |key: &str, unit: &str, dflt: Option<f64>| -> Result<f64> {
        let v = s.positive(key, unit)?.or(dflt);
        s.require(key, v)
    };
    let l_t = get("l_t", "H", base.map(|b| b.l_t))?;
    let l_r = get("l_r", "H", base.map(|b| b.l_r))?;
    let m_r = get("m_r", "H", base.map(|b| b.m_r))?;
    let c_r1 = get("c_r1", "F", base.map(|b| b.c_r1))?;
    let c_r2 = get("c_r2", "F", base.map(|b| b.c_r2))?;
    let r_load = get("r_load", "ohm", base.map(|b| b.r_load))?;
    let i_t_amplitude = get("i_t_amplitude", "A", base.map(|b| b.i_t_amplitude))?;
    let delta_v_d = s.non_negative("delta_v_d", "V")?.or(base.map(|b| b.delta_v_d)).unwrap_or(0.0);
    let r_switch = s.non_negative("r_switch", "ohm")?.or(base.map(|b| b.r_switch)).unwrap_or(0.0);
    let p = SystemParams {
        l_t,
        l_r,
        m_r,
        c_r1,
        c_r2,
        r_load,
        i_t_amplitude,
        delta_v_d,
        r_switch,
    };
    p.validate().map_err(|e| parse_err(s.line, e.to_string()))?;
    Ok(p)
}

struct ReceiverFields {
    tuned: Option<f64>,
    c: Option<f64>,
    l: Option<f64>,
    r_load: Option<f64>,
    m: Option<f64>,
}

impl ReceiverFields {
    fn build(&self, name: &str, p: &SystemParams) -> std::result::Result<FixedReceiver, String> {
        let l = self.l.unwrap_or(p.l_r);
        let r = self.r_load.unwrap_or(p.r_load);
        let m = self.m.unwrap_or(p.m_r);
        match (self.tuned, self.c) {
            (Some(f), None) => Ok(FixedReceiver::tuned(name, f, l, r, m)),
            (None, Some(c)) => Ok(FixedReceiver {
                name: name.to_string(),
                l,
                c,
                r_load: r,
                m,
            }),
            _ => Err(format!("[receiver {name}] needs exactly one of 'tuned' or 'c'")),
        }
    }
}

fn read_receiver_fields(s: &mut SectionReader) -> Result<ReceiverFields> {
    Ok(ReceiverFields {
        tuned: s.positive("tuned", "Hz")?,
        c: s.positive("c", "F")?,
        l: s.positive("l", "H")?,
        r_load: s.positive("r_load", "ohm")?,
        m: s.quantity("m", "H")?,
    })
}

fn read_attacker(s: &mut SectionReader) -> Result<Option<AttackerSpec>> {
    let enabled = s.flag("enabled")?.unwrap_or(true);
    let mut c = ControllerConfig::default();
    if let Some(e) = s.raw("sense_mode") {
        c.sense_mode = SenseMode::parse(&e.value)
            .ok_or_else(|| parse_err(e.line, format!("unknown sense_mode '{}'", e.value)))?;
    }
    if let Some(v) = s.non_negative("t_filter", "s")? {
        c.t_filter = v;
    }
    if let Some(v) = s.positive("estimation_window", "s")? {
        c.estimation_window = v;
    }
    if let Some(v) = s.positive("adopt_radius", "Hz")? {
        c.adopt_radius = v;
    }
    if let Some(v) = s.positive("phase_tolerance", "deg")? {
        c.phase_tolerance = v;
    }
    if let Some(v) = s.positive("trim_gain", "")? {
        c.trim_gain = v;
    }
    if let Some(v) = s.positive("distortion_rel_tol", "")? {
        c.distortion_rel_tol = v;
    }
    if let Some(v) = s.integer("distortion_count")? {
        c.distortion_count = u32::try_from(v).unwrap_or(u32::MAX);
    }
    if let Some(v) = s.flag("regulation")? {
        c.regulation_enabled = v;
    }
    if let Some(v) = s.non_negative("hysteresis_fraction", "")? {
        c.hysteresis_fraction = v;
    }
    if let Some(v) = s.positive("refine_threshold", "Hz")? {
        c.refine_threshold = v;
    }
    if let Some(v) = s.positive("anchor_gain", "")? {
        c.anchor_gain = v;
    }
    if let Some(v) = s.flag("oracle_phase")? {
        c.oracle_phase = v;
    }
    let table_freqs = s.list("table", "Hz")?.unwrap_or_default();
    let calibrate = s.flag("calibrate")?.unwrap_or(c.regulation_enabled);
    c.validate(None).map_err(|e| parse_err(s.line, e.to_string()))?;
    Ok(enabled.then_some(AttackerSpec {
        config: c,
        table_freqs,
        calibrate,
    }))
}

fn read_schedule(s: &mut SectionReader) -> Result<HopSchedule> {
    let hops = s.raw("hops");
    let alternate = s.list("alternate", "Hz")?;
    let freq_set = s.list("freq_set", "Hz")?;
    let forms = hops.is_some() as u8 + alternate.is_some() as u8 + freq_set.is_some() as u8;
    if forms != 1 {
        return Err(parse_err(
            s.line,
            "[schedule] needs exactly one of 'hops', 'alternate' or 'freq_set'".into(),
        ));
    }
    if let Some(e) = hops {
        let mut v = Vec::new();
        for item in e.value.split(',') {
            let (f, d) = item
                .split_once('@')
                .ok_or_else(|| parse_err(e.line, format!("hop '{}' must be FREQ@DWELL", item.trim())))?;
            let freq = quantity(f, "Hz").map_err(|m| parse_err(e.line, format!("hops: {m}")))?;
            let dwell = quantity(d, "s").map_err(|m| parse_err(e.line, format!("hops: {m}")))?;
            v.push(Hop { freq, dwell });
        }
        return Ok(HopSchedule::Explicit(v));
    }
    if let Some(freqs) = alternate {
        let dwell = s.positive("dwell", "s")?;
        let dwell = s.require("dwell", dwell)?;
        let repeat = s.integer("repeat")?.unwrap_or(1) as usize;
        return Ok(HopSchedule::alternating(&freqs, dwell, repeat));
    }
    let freq_set = freq_set.unwrap();
    let lo = s.positive("dwell_min", "s")?.unwrap_or(0.5e-3);
    let hi = s.positive("dwell_max", "s")?.unwrap_or(2e-3);
    let seed = s.integer("seed")?.unwrap_or(u64::MAX);
    Ok(HopSchedule::Generated(GeneratorSpec {
        freq_set,
        dwell_range: (lo, hi),
        seed,
    }))
}

fn read_defense(s: &mut SectionReader) -> Result<DefenseConfig> {
    let mut d = DefenseConfig {
        enabled: true,
        ..Default::default()
    };
    if let Some(v) = s.flag("enabled")? {
        d.enabled = v;
    }
    if let Some(v) = s.positive("mismatch_threshold", "")? {
        d.mismatch_threshold = v;
    }
    if let Some(v) = s.non_negative("reaction_delay", "s")? {
        d.reaction_delay = v;
    }
    Ok(d)
}

#[derive(Default)]
struct SimPartial {
    dt: Option<f64>,
    duration: Option<f64>,
    seed: Option<u64>,
    decimation: Option<usize>,
}

fn read_sim(s: &mut SectionReader) -> Result<SimPartial> {
    let decimation = match s.integer("decimation")? {
        Some(0) => return Err(parse_err(s.line, "decimation must be >= 1".into())),
        d => d.map(|d| d as usize),
    };
    Ok(SimPartial {
        dt: s.positive("dt", "s")?,
        duration: s.positive("duration", "s")?,
        seed: s.integer("seed")?,
        decimation,
    })
}
