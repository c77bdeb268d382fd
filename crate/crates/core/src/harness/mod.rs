//! Scenarios, metrics, sweeps and reports.

pub mod metrics;
pub mod report;
pub mod scenario;
pub mod sweep;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use crate::error::Result;
use metrics::LockTime;
use scenario::{Scenario, ScenarioRun};

/// Run scenarios on up to `jobs` threads; results keep input order.
pub fn run_all(scenarios: &[Scenario], jobs: usize) -> Vec<Result<ScenarioRun>> {
    let jobs = jobs.clamp(1, scenarios.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<ScenarioRun>>>> = scenarios.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sc) = scenarios.get(i) else { break };
                let r = sc.run();
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every scenario ran"))
        .collect()
}

/// Pass bounds applied to attacked hops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub max_lock_cycles: f64,
    pub max_lock_seconds: f64,
    pub min_stolen_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            max_lock_cycles: 20.0,
            max_lock_seconds: 250e-6,
            min_stolen_ratio: 0.65,
        }
    }
}

/// Violations of `th` in a finished run, one line each.
pub fn check_run(run: &ScenarioRun, th: &Thresholds) -> Vec<String> {
    let mut v = Vec::new();
    if run.output.trace.attacker().is_none() {
        return v;
    }
    for (k, h) in run.metrics.hops.iter().enumerate() {
        match h.lock {
            LockTime::NotLocked => v.push(format!("hop {k} at {:.0} Hz never locked", h.freq)),
            LockTime::Locked { seconds, cycles } => {
                if cycles > th.max_lock_cycles || seconds > th.max_lock_seconds {
                    v.push(format!(
                        "hop {k} at {:.0} Hz locked in {:.1} us ({cycles:.1} cycles)",
                        h.freq,
                        seconds * 1e6
                    ));
                }
            }
        }
        if let Some(r) = h.stolen_ratio {
            if r < th.min_stolen_ratio {
                v.push(format!("hop {k} at {:.0} Hz stole {r:.3} of the matched power", h.freq));
            }
        }
    }
    v
}
