//! Steady-state response against the switch off-time at one frequency.

use std::thread;

use crate::design::steady_response;
use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;
use crate::interceptor::ControllerConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub t_off: f64,
    pub t_on: f64,
    /// Fundamental amplitude of the intruder current (A).
    pub amplitude: f64,
    /// Lead of the intruder current over I_T (degrees).
    pub phase_deg: f64,
}

/// One pinned steady-state run per off-time; points run in parallel.
pub fn duty_sweep(scenario: &Scenario, freq: f64, t_off_values: &[f64]) -> Result<Vec<SweepPoint>> {
    let half = 0.5 / freq;
    if let Some(&bad) = t_off_values.iter().find(|&&t| !(0.0..=half).contains(&t)) {
        return Err(Error::Domain(format!("t_off {bad:e} s outside [0, {half:e}] s")));
    }
    let params = scenario.plant.params;
    let config = scenario
        .attacker
        .as_ref()
        .map_or_else(ControllerConfig::default, |a| a.config.clone());
    let dt = scenario.sim.dt;
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(t_off_values.len().max(1));
    let mut out: Vec<Option<Result<SweepPoint>>> = vec![None; t_off_values.len()];
    thread::scope(|s| {
        for (w, chunk) in out.chunks_mut(t_off_values.len().div_ceil(workers).max(1)).enumerate() {
            let config = &config;
            let base = w * t_off_values.len().div_ceil(workers).max(1);
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    let t_off = t_off_values[base + k];
                    let t_on = half - t_off;
                    *slot = Some(steady_response(&params, freq, t_on, config, dt).map(|r| SweepPoint {
                        t_off,
                        t_on,
                        amplitude: r.amplitude,
                        phase_deg: r.phase_deg,
                    }));
                }
            });
        }
    });
    out.into_iter().map(|p| p.expect("every point computed")).collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut s = String::from("t_off_s,t_on_s,i_r_amplitude_a,phase_deg\n");
    for p in points {
        s.push_str(&format!("{:e},{:e},{:e},{:e}\n", p.t_off, p.t_on, p.amplitude, p.phase_deg));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_off_time_beyond_half_period() {
        let s = Scenario::table3();
        assert!(duty_sweep(&s, 65e3, &[1e-5]).is_err());
        assert!(duty_sweep(&s, 65e3, &[-1e-9]).is_err());
    }

    #[test]
    fn csv_has_one_row_per_point() {
        let p = SweepPoint {
            t_off: 1e-6,
            t_on: 2e-6,
            amplitude: 3.0,
            phase_deg: 90.0,
        };
        let csv = sweep_csv(&[p, p]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("t_off_s,"));
    }
}
