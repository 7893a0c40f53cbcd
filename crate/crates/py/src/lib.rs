//! Python bindings: `import pynucasim`.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use nucasim::fv::{profile_frequent_values, FvTable};
use nucasim::line::LineValue;
use nucasim::sim::{self, SimConfig};
use nucasim::trace::{self, AccessOp, AccessRecord, WorkloadSpec};
use nucasim::tsv::{self, TransitionStats, TsvBundle, TsvParams};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn line(bytes: &[u8]) -> PyResult<LineValue> {
    LineValue::from_slice(bytes).ok_or_else(|| value_err(format!("a line is 64 bytes, got {}", bytes.len())))
}

/// Frequent-value table with one-hot codewords.
#[pyclass(name = "FvTable", frozen)]
struct PyFvTable {
    inner: Arc<FvTable>,
}

#[pymethods]
impl PyFvTable {
    #[new]
    fn new(entries: Vec<Vec<u8>>) -> PyResult<Self> {
        let values = entries.iter().map(|e| line(e)).collect::<PyResult<Vec<_>>>()?;
        let t = FvTable::new(values).map_err(value_err)?;
        Ok(PyFvTable { inner: Arc::new(t) })
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyFvTable { inner: Arc::new(FvTable::from_text(text).map_err(value_err)?) })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    /// Codeword bits for `value`, or None when it is not in the table.
    fn encode(&self, value: &[u8]) -> PyResult<Option<u32>> {
        Ok(self.inner.encode(&line(value)?).map(|c| c.bits()))
    }

    fn decode<'py>(&self, py: Python<'py>, bits: u32) -> PyResult<Bound<'py, PyBytes>> {
        let v = self.inner.decode(bits).map_err(value_err)?;
        Ok(PyBytes::new(py, v.as_bytes()))
    }

    fn entries<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyBytes>> {
        self.inner.entries().iter().map(|v| PyBytes::new(py, v.as_bytes())).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __contains__(&self, value: &[u8]) -> PyResult<bool> {
        Ok(self.inner.contains(&line(value)?))
    }
}

#[pyfunction]
fn is_zero_line(value: &[u8]) -> PyResult<bool> {
    Ok(line(value)?.is_zero())
}

/// Coupling factor of two wires' transitions, in {0, 1, 2}.
#[pyfunction]
#[pyo3(signature = (vi_before, vi_after, vj_before, vj_after, vdd = 1.0))]
fn delta(vi_before: f64, vi_after: f64, vj_before: f64, vj_after: f64, vdd: f64) -> u8 {
    tsv::delta(vi_before, vi_after, vj_before, vj_after, vdd)
}

#[pyfunction]
fn pair_transitions(p_trans: f64) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&p_trans) {
        return Err(value_err("p_trans must be in [0, 1]"));
    }
    Ok(tsv::expected_pair_transitions(p_trans))
}

/// Expected per-wire energy for a transition probability, with default
/// bundle parameters. Returns a dict of the components and the total.
#[pyfunction]
fn analytic_energy<'py>(py: Python<'py>, p_trans: f64) -> PyResult<Bound<'py, PyDict>> {
    let e_t = pair_transitions(p_trans)?;
    let bundle = TsvBundle::new(TsvParams::default()).map_err(value_err)?;
    let e = tsv::analytic_energy(&TransitionStats::from_p_trans(p_trans), &bundle);
    let d = PyDict::new(py);
    d.set_item("e_t", e_t)?;
    d.set_item("transition", e.transition)?;
    d.set_item("north", e.north)?;
    d.set_item("northwest", e.northwest)?;
    d.set_item("total", e.total())?;
    Ok(d)
}

type PyRecord<'py> = (u64, &'static str, u64, Option<Bound<'py, PyBytes>>);

fn to_py<'py>(py: Python<'py>, records: &[AccessRecord]) -> Vec<PyRecord<'py>> {
    records
        .iter()
        .map(|r| {
            let op = match r.op {
                AccessOp::Read => "R",
                AccessOp::Write => "W",
                AccessOp::Invalidate => "I",
            };
            (r.cycle, op, r.address, r.payload.map(|p| PyBytes::new(py, p.as_bytes())))
        })
        .collect()
}

/// Generates a synthetic trace from workload TOML text. Records are
/// `(cycle, op, address, payload)` tuples.
#[pyfunction]
fn generate_trace<'py>(py: Python<'py>, workload_toml: &str) -> PyResult<Vec<PyRecord<'py>>> {
    let spec = WorkloadSpec::from_toml(workload_toml).map_err(value_err)?;
    let records = trace::generate_synthetic(&spec).map_err(value_err)?;
    Ok(to_py(py, &records))
}

/// Generates a synthetic trace and returns it in the text trace format.
#[pyfunction]
fn generate_trace_text(workload_toml: &str) -> PyResult<String> {
    let spec = WorkloadSpec::from_toml(workload_toml).map_err(value_err)?;
    let records = trace::generate_synthetic(&spec).map_err(value_err)?;
    Ok(trace::trace_to_string(&records))
}

#[pyfunction]
fn parse_trace<'py>(py: Python<'py>, text: &str) -> PyResult<Vec<PyRecord<'py>>> {
    let records = trace::parse_trace_str(text).map_err(value_err)?;
    Ok(to_py(py, &records))
}

/// Profiles a text trace into a frequent-value table of at most `k` entries.
#[pyfunction]
#[pyo3(signature = (trace_text, k = 32))]
fn profile(trace_text: &str, k: usize) -> PyResult<PyFvTable> {
    if k > nucasim::fv::FV_TABLE_CAPACITY {
        return Err(value_err("k exceeds the table capacity"));
    }
    let records = trace::parse_trace_str(trace_text).map_err(value_err)?;
    Ok(PyFvTable { inner: Arc::new(profile_frequent_values(&records, k)) })
}

fn result_dict<'py>(py: Python<'py>, r: &sim::RunResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("report", r.report_text())?;
    d.set_item("intervals_csv", r.intervals_csv())?;
    d.set_item("decision_log", &r.decision_log)?;
    d.set_item("total_energy", r.energy.total_energy)?;
    d.set_item("static_energy", r.energy.static_energy)?;
    d.set_item("dynamic_energy", r.energy.dynamic_energy)?;
    d.set_item("overhead_energy", r.energy.overhead_energy)?;
    d.set_item("interconnect_energy", r.energy.interconnect_energy)?;
    d.set_item("edp", r.energy.edp)?;
    d.set_item("miss_rate", r.summary.miss_rate())?;
    d.set_item("extra_misses", r.summary.extra_misses)?;
    d.set_item("mean_active_ratio", r.summary.mean_active_ratio)?;
    d.set_item("intervals", r.summary.intervals)?;
    Ok(d)
}

/// Runs the configuration file at `path`, as the `run` command does.
#[pyfunction]
fn run_config<'py>(py: Python<'py>, path: &str) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig::load(path.as_ref()).map_err(value_err)?;
    cfg.validate_for_run(false).map_err(value_err)?;
    let fv = cfg.load_fv_table().map_err(value_err)?;
    let records = cfg.load_trace().map_err(value_err)?;
    let r = py.detach(|| sim::run(&cfg, fv, &records)).map_err(value_err)?;
    result_dict(py, &r)
}

/// Runs configuration TOML text on a text trace. Paths inside the config
/// are ignored; pass the table directly for NFV.
#[pyfunction]
#[pyo3(signature = (config_toml, trace_text, fv_table = None))]
fn run_toml<'py>(
    py: Python<'py>,
    config_toml: &str,
    trace_text: &str,
    fv_table: Option<&PyFvTable>,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = SimConfig::from_toml(config_toml).map_err(value_err)?;
    let records = trace::parse_trace_str(trace_text).map_err(value_err)?;
    let fv = fv_table.map(|t| t.inner.clone());
    let r = py.detach(|| sim::run(&cfg, fv, &records)).map_err(value_err)?;
    result_dict(py, &r)
}

#[pymodule]
fn pynucasim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFvTable>()?;
    m.add_function(wrap_pyfunction!(is_zero_line, m)?)?;
    m.add_function(wrap_pyfunction!(delta, m)?)?;
    m.add_function(wrap_pyfunction!(pair_transitions, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_energy, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace, m)?)?;
    m.add_function(wrap_pyfunction!(generate_trace_text, m)?)?;
    m.add_function(wrap_pyfunction!(parse_trace, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_toml, m)?)?;
    Ok(())
}
