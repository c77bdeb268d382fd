//! Python bindings: design math, scenarios, runs and sweeps.

use std::path::PathBuf;

use fhwpt::design::{self, DesignBand, SenseMode};
use fhwpt::harness::metrics::{analyze, metrics_csv, LockTime};
use fhwpt::harness::report::emit_report;
use fhwpt::harness::scenario::{quantity, Scenario, ScenarioRun};
use fhwpt::harness::sweep::duty_sweep;
use fhwpt::harness::{check_run, Thresholds};
use fhwpt::sim::Trace;
use fhwpt::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Parse { .. } => PyValueError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn mode(s: &str) -> PyResult<SenseMode> {
    SenseMode::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown sense mode '{s}'")))
}

/// Closed-form `(t_on, t_off)` tuning the switched network to `f`.
#[pyfunction]
fn ton_toff(f: f64, l_r: f64, c_r1: f64, c_r2: f64) -> PyResult<(f64, f64)> {
    let d = design::ton_toff(f, l_r, c_r1, c_r2).map_err(to_py)?;
    Ok((d.t_on, d.t_off))
}

#[pyfunction]
fn equivalent_capacitance(t_off: f64, f: f64, c_r1: f64, c_r2: f64) -> PyResult<f64> {
    design::equivalent_capacitance(t_off, f, c_r1, c_r2).map_err(to_py)
}

#[pyfunction]
fn ideal_capacitance(f: f64, l_r: f64) -> f64 {
    design::ideal_capacitance(f, l_r)
}

#[pyfunction]
fn achievable_band(l_r: f64, c_r1: f64, c_r2: f64) -> (f64, f64) {
    design::achievable_band(l_r, c_r1, c_r2)
}

/// Capacitor bounds for a band as `{"c_r1_max": .., "c_sum_min": ..}`.
#[pyfunction]
#[pyo3(signature = (f_l, f_h, l_r, c_r2, t_filter = 0.75e-6, sense_mode = "capacitor-voltage"))]
fn select_capacitors<'py>(
    py: Python<'py>,
    f_l: f64,
    f_h: f64,
    l_r: f64,
    c_r2: f64,
    t_filter: f64,
    sense_mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let band = DesignBand {
        f_l,
        f_h,
        t_filter,
        sense_mode: mode(sense_mode)?,
    };
    let sel = design::select_capacitors(&band, l_r, c_r2).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("c_r1_max", sel.c_r1_max)?;
    d.set_item("c_sum_min", sel.c_sum_min)?;
    Ok(d)
}

/// Parse a quantity such as `22nF` in base units of `unit`.
#[pyfunction]
fn parse_quantity(text: &str, unit: &str) -> PyResult<f64> {
    quantity(text, unit).map_err(PyValueError::new_err)
}

/// Metrics CSV recomputed from a saved trace.
#[pyfunction]
fn analyze_trace(path: PathBuf) -> PyResult<String> {
    let tr = Trace::load_csv(&path).map_err(to_py)?;
    Ok(metrics_csv(&analyze(&tr).map_err(to_py)?))
}

#[pyclass(name = "Scenario", module = "fhwpt_py")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    /// The bundled two-receiver alternating-hop scenario.
    #[staticmethod]
    fn table3() -> Self {
        Self {
            inner: Scenario::table3(),
        }
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: Scenario::parse(text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Scenario::load(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// Frequency table as `(freq_hz, t_on_s, t_off_s, origin)` rows.
    fn table(&self, py: Python<'_>) -> PyResult<Vec<(f64, f64, f64, String)>> {
        let t = py.detach(|| self.inner.build_table()).map_err(to_py)?;
        Ok(t.iter()
            .map(|e| (e.freq, e.duty.t_on, e.duty.t_off, e.origin.as_str().to_string()))
            .collect())
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyRun> {
        let r = py.detach(|| self.inner.run()).map_err(to_py)?;
        Ok(PyRun { inner: r })
    }

    /// Steady `(t_off, t_on, amplitude, phase_deg)` per off-time at `freq`.
    fn duty_sweep(&self, py: Python<'_>, freq: f64, t_off: Vec<f64>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let pts = py.detach(|| duty_sweep(&self.inner, freq, &t_off)).map_err(to_py)?;
        Ok(pts.iter().map(|p| (p.t_off, p.t_on, p.amplitude, p.phase_deg)).collect())
    }
}

#[pyclass(name = "Run", module = "fhwpt_py")]
struct PyRun {
    inner: ScenarioRun,
}

#[pymethods]
impl PyRun {
    /// One dict per hop.
    fn hops<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let mut out = Vec::new();
        for h in &self.inner.metrics.hops {
            let d = PyDict::new(py);
            d.set_item("t_hop", h.t_hop)?;
            d.set_item("t_end", h.t_end)?;
            d.set_item("freq", h.freq)?;
            match h.lock {
                LockTime::Locked { seconds, cycles } => {
                    d.set_item("lock_time_s", seconds)?;
                    d.set_item("lock_cycles", cycles)?;
                }
                LockTime::NotLocked => {
                    d.set_item("lock_time_s", py.None())?;
                    d.set_item("lock_cycles", py.None())?;
                }
            }
            let powers = PyDict::new(py);
            for (name, p) in &h.powers {
                powers.set_item(name, p)?;
            }
            d.set_item("powers", powers)?;
            d.set_item("matched", h.matched.clone())?;
            d.set_item("stolen_ratio", h.stolen_ratio)?;
            d.set_item("phase_error_deg", h.phase_error_deg)?;
            out.push(d);
        }
        Ok(out)
    }

    fn trace_csv(&self) -> String {
        self.inner.output.trace.to_csv_string()
    }

    fn metrics_csv(&self) -> String {
        metrics_csv(&self.inner.metrics)
    }

    /// Violations of the default lock and power bounds.
    fn violations(&self) -> Vec<String> {
        check_run(&self.inner, &Thresholds::default())
    }

    /// Write every report artifact into `dir`; returns the paths.
    fn write_report(&self, dir: PathBuf) -> PyResult<Vec<PathBuf>> {
        emit_report(&self.inner, &dir).map_err(to_py)
    }
}

#[pymodule]
fn fhwpt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(ton_toff, m)?)?;
    m.add_function(wrap_pyfunction!(equivalent_capacitance, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_capacitance, m)?)?;
    m.add_function(wrap_pyfunction!(achievable_band, m)?)?;
    m.add_function(wrap_pyfunction!(select_capacitors, m)?)?;
    m.add_function(wrap_pyfunction!(parse_quantity, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_trace, m)?)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<PyRun>()?;
    Ok(())
}
