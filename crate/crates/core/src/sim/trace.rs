use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Attack controller mode tag recorded with each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    Sense,
    Estimate,
    Engage,
}

impl ControllerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerMode::Sense => "SENSE",
            ControllerMode::Estimate => "ESTIMATE",
            ControllerMode::Engage => "ENGAGE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "SENSE" => Some(ControllerMode::Sense),
            "ESTIMATE" => Some(ControllerMode::Estimate),
            "ENGAGE" => Some(ControllerMode::Engage),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverKind {
    Fixed,
    Switched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverTrace {
    pub name: String,
    pub kind: ReceiverKind,
    pub i_r: Vec<f64>,
    pub v_c1: Vec<f64>,
    pub v_c2: Vec<f64>,
    pub v_load: Vec<f64>,
    pub switch_closed: Vec<bool>,
    /// Cumulative energy lost in switch closures and the switch path (J).
    pub e_switch: Vec<f64>,
}

impl ReceiverTrace {
    pub fn new(name: &str, kind: ReceiverKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            i_r: Vec::new(),
            v_c1: Vec::new(),
            v_c2: Vec::new(),
            v_load: Vec::new(),
            switch_closed: Vec::new(),
            e_switch: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerTrace {
    pub mode: Vec<Option<ControllerMode>>,
    pub f_estimate_hz: Vec<f64>,
    pub t_on_s: Vec<f64>,
}

/// Uniformly sampled record of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Spacing between recorded samples (s).
    pub sample_dt: f64,
    pub t: Vec<f64>,
    pub i_t: Vec<f64>,
    pub f_t_active: Vec<f64>,
    pub receivers: Vec<ReceiverTrace>,
    pub controller: Option<ControllerTrace>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn receiver(&self, name: &str) -> Option<&ReceiverTrace> {
        self.receivers.iter().find(|r| r.name == name)
    }

    pub fn attacker(&self) -> Option<&ReceiverTrace> {
        self.receivers
            .iter()
            .find(|r| r.kind == ReceiverKind::Switched)
    }

    /// Index of the first sample with `t >= time`.
    pub fn index_at(&self, time: f64) -> usize {
        self.t.partition_point(|&x| x < time - 0.25 * self.sample_dt)
    }

    pub fn header(&self) -> Vec<String> {
        let mut cols = vec!["t".to_string(), "i_t".to_string()];
        for r in &self.receivers {
            for f in ["i_r", "v_c1", "v_c2", "v_load", "switch_closed"] {
                cols.push(format!("{}.{}", r.name, f));
            }
            if r.kind == ReceiverKind::Switched {
                cols.push(format!("{}.e_switch", r.name));
            }
        }
        cols.push("f_t_active".to_string());
        if self.controller.is_some() {
            cols.push("controller_mode".to_string());
            cols.push("f_estimate_hz".to_string());
            cols.push("t_on_s".to_string());
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(w);
        writeln!(w, "{}", self.header().join(","))?;
        let mut line = String::with_capacity(512);
        for k in 0..self.len() {
            line.clear();
            let _ = write!(line, "{:e},{:e}", self.t[k], self.i_t[k]);
            for r in &self.receivers {
                let _ = write!(
                    line,
                    ",{:e},{:e},{:e},{:e},{}",
                    r.i_r[k],
                    r.v_c1[k],
                    r.v_c2[k],
                    r.v_load[k],
                    u8::from(r.switch_closed[k])
                );
                if r.kind == ReceiverKind::Switched {
                    let _ = write!(line, ",{:e}", r.e_switch[k]);
                }
            }
            let _ = write!(line, ",{:e}", self.f_t_active[k]);
            if let Some(c) = &self.controller {
                let mode = c.mode[k].map(|m| m.as_str()).unwrap_or("-");
                let _ = write!(line, ",{},{:e},{:e}", mode, c.f_estimate_hz[k], c.t_on_s[k]);
            }
            writeln!(w, "{line}")?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(f))
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate();
        let header = match lines.next() {
            Some((_, Ok(h))) => h,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: "missing header row".into(),
                })
            }
        };
        let cols: Vec<&str> = header.trim().split(',').collect();
        let layout = Layout::from_header(&cols)?;
        let mut trace = layout.empty_trace();

        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected {} fields, found {}", cols.len(), fields.len()),
                });
            }
            let num = |i: usize| -> Result<f64> {
                let v: f64 = fields[i].parse().map_err(|_| Error::Parse {
                    line: lineno,
                    msg: format!("bad number '{}' in column {}", fields[i], cols[i]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("non-finite value in column {}", cols[i]),
                    });
                }
                Ok(v)
            };
            trace.t.push(num(layout.t)?);
            trace.i_t.push(num(layout.i_t)?);
            trace.f_t_active.push(num(layout.f_t_active)?);
            for (r, rc) in trace.receivers.iter_mut().zip(&layout.receivers) {
                r.i_r.push(num(rc.i_r)?);
                r.v_c1.push(num(rc.v_c1)?);
                r.v_c2.push(num(rc.v_c2)?);
                r.v_load.push(num(rc.v_load)?);
                r.switch_closed.push(num(rc.switch_closed)? != 0.0);
                r.e_switch.push(match rc.e_switch {
                    Some(i) => num(i)?,
                    None => 0.0,
                });
            }
            if let (Some(c), Some((im, ife, iton))) = (trace.controller.as_mut(), layout.controller) {
                c.mode.push(ControllerMode::parse(fields[im]));
                c.f_estimate_hz.push(num(ife)?);
                c.t_on_s.push(num(iton)?);
            }
        }
        if trace.t.len() >= 2 {
            trace.sample_dt = trace.t[1] - trace.t[0];
        }
        Ok(trace)
    }
}

struct ReceiverColumns {
    name: String,
    i_r: usize,
    v_c1: usize,
    v_c2: usize,
    v_load: usize,
    switch_closed: usize,
    e_switch: Option<usize>,
}

struct Layout {
    t: usize,
    i_t: usize,
    f_t_active: usize,
    receivers: Vec<ReceiverColumns>,
    controller: Option<(usize, usize, usize)>,
}

impl Layout {
    fn from_header(cols: &[&str]) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            cols.iter().position(|c| *c == name).ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column '{name}'"),
            })
        };
        let mut names: Vec<String> = Vec::new();
        for c in cols {
            if let Some(n) = c.strip_suffix(".i_r") {
                names.push(n.to_string());
            }
        }
        let mut receivers = Vec::new();
        for n in names {
            receivers.push(ReceiverColumns {
                i_r: find(&format!("{n}.i_r"))?,
                v_c1: find(&format!("{n}.v_c1"))?,
                v_c2: find(&format!("{n}.v_c2"))?,
                v_load: find(&format!("{n}.v_load"))?,
                switch_closed: find(&format!("{n}.switch_closed"))?,
                e_switch: cols.iter().position(|c| *c == format!("{n}.e_switch")),
                name: n,
            });
        }
        let controller = match cols.iter().position(|c| *c == "controller_mode") {
            Some(m) => Some((m, find("f_estimate_hz")?, find("t_on_s")?)),
            None => None,
        };
        Ok(Self {
            t: find("t")?,
            i_t: find("i_t")?,
            f_t_active: find("f_t_active")?,
            receivers,
            controller,
        })
    }

    fn empty_trace(&self) -> Trace {
        Trace {
            sample_dt: 0.0,
            t: Vec::new(),
            i_t: Vec::new(),
            f_t_active: Vec::new(),
            receivers: self
                .receivers
                .iter()
                .map(|r| {
                    let kind = if r.e_switch.is_some() {
                        ReceiverKind::Switched
                    } else {
                        ReceiverKind::Fixed
                    };
                    ReceiverTrace::new(&r.name, kind)
                })
                .collect(),
            controller: self.controller.map(|_| ControllerTrace::default()),
        }
    }
}
