//! Python bindings. Structured results cross the boundary as JSON text.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sdft_core::corpus;
use sdft_core::ir::{self, validate_module};
use sdft_core::pdg::build_pdg;
use sdft_core::rules::{parse_rules, serialize_rules, taint_rule_gen, RuleOpts, TaintRuleProgram, DEFAULT_LEN};
use sdft_core::summarize::{flatten_prim_types, summarize_library, SummarizeOpts};
use sdft_core::tracker::{self, MachineConfig, Mode, TaintConfig};
use sdft_core::validate;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json(v: &impl serde::Serialize) -> PyResult<String> {
    serde_json::to_string(v).map_err(value_err)
}

/// A parsed and validated IR module.
#[pyclass(frozen, module = "sdft")]
struct Module {
    inner: ir::Module,
}

#[pymethods]
impl Module {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        let inner = ir::parse_module(text).map_err(value_err)?;
        let diags = validate_module(&inner);
        if !diags.is_empty() {
            let lines: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
            return Err(PyValueError::new_err(lines.join("\n")));
        }
        Ok(Module { inner })
    }

    #[getter]
    fn functions(&self) -> Vec<String> {
        self.inner.functions.iter().map(|f| f.name.clone()).collect()
    }

    #[getter]
    fn library_functions(&self) -> Vec<String> {
        self.inner.library_fns().map(|f| f.name.clone()).collect()
    }

    fn to_ir(&self) -> String {
        self.inner.to_string()
    }

    /// Primitive leaf types per aggregate name.
    fn flatten(&self) -> BTreeMap<String, Vec<String>> {
        flatten_prim_types(&self.inner.aggregates)
            .into_iter()
            .map(|(k, v)| (k, v.iter().map(|t| t.to_string()).collect()))
            .collect()
    }

    /// Dependency graph of one function in DOT, with library callees summarized.
    #[pyo3(signature = (function, control_deps = true))]
    fn pdg_dot(&self, function: &str, control_deps: bool) -> PyResult<String> {
        let f = self.inner.function(function).ok_or_else(|| PyKeyError::new_err(function.to_string()))?;
        let mut sums = summarize_library(&self.inner, SummarizeOpts { control_deps }).summaries;
        sums.remove(function);
        Ok(build_pdg(&self.inner, f, &sums).map_err(value_err)?.to_dot())
    }

    fn __repr__(&self) -> String {
        format!("Module(functions={})", self.inner.functions.len())
    }
}

/// Summary JSON per library function.
#[pyfunction]
#[pyo3(signature = (module, control_deps = true))]
fn summarize(module: &Module, control_deps: bool) -> BTreeMap<String, String> {
    summarize_library(&module.inner, SummarizeOpts { control_deps })
        .summaries
        .into_iter()
        .map(|(k, s)| (k, s.to_json()))
        .collect()
}

/// Rule program JSON per library function.
#[pyfunction]
#[pyo3(signature = (module, control_deps = true, default_len = DEFAULT_LEN))]
fn generate_rules(module: &Module, control_deps: bool, default_len: u64) -> PyResult<BTreeMap<String, String>> {
    let lib = summarize_library(&module.inner, SummarizeOpts { control_deps });
    let mut out = BTreeMap::new();
    for s in lib.summaries.values() {
        let p = taint_rule_gen(s, &module.inner, RuleOpts { default_len }).map_err(value_err)?;
        out.insert(p.function.clone(), serialize_rules(&p));
    }
    Ok(out)
}

fn load_rules(rules: Option<BTreeMap<String, String>>) -> PyResult<BTreeMap<String, TaintRuleProgram>> {
    let mut out = BTreeMap::new();
    for text in rules.unwrap_or_default().values() {
        let p = parse_rules(text).map_err(value_err)?;
        out.insert(p.function.clone(), p);
    }
    Ok(out)
}

fn load_config(text: Option<&str>) -> PyResult<TaintConfig> {
    text.map_or(Ok(TaintConfig::default()), |t| TaintConfig::from_json(t).map_err(value_err))
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "instr" => Ok(Mode::InstrOnly),
        "hybrid" => Ok(Mode::Hybrid),
        other => Err(PyValueError::new_err(format!("unknown mode `{other}`"))),
    }
}

fn machine(step_budget: Option<u64>, default_len: u64) -> MachineConfig {
    let d = MachineConfig::default();
    MachineConfig { step_budget: step_budget.unwrap_or(d.step_budget), default_len, ..d }
}

/// Executes `entry` and returns the run report as JSON. Traps raise RuntimeError.
#[pyfunction]
#[pyo3(signature = (module, entry = "main", args = Vec::new(), mode = "hybrid", rules = None, taint_config = None,
                    step_budget = None, default_len = DEFAULT_LEN))]
#[allow(clippy::too_many_arguments)]
fn run(
    module: &Module,
    entry: &str,
    args: Vec<i64>,
    mode: &str,
    rules: Option<BTreeMap<String, String>>,
    taint_config: Option<&str>,
    step_budget: Option<u64>,
    default_len: u64,
) -> PyResult<String> {
    let rules = load_rules(rules)?;
    let cfg = load_config(taint_config)?;
    let rep = tracker::run(&module.inner, entry, &args, &cfg, parse_mode(mode)?, &rules, machine(step_budget, default_len))
        .map_err(|t| PyRuntimeError::new_err(t.to_string()))?;
    Ok(rep.to_json())
}

#[pyfunction]
#[pyo3(signature = (module, rules, function, trials = 100, seed = 0))]
fn compare(module: &Module, rules: BTreeMap<String, String>, function: &str, trials: usize, seed: u64) -> PyResult<String> {
    let r = validate::oracle_compare(&module.inner, &load_rules(Some(rules))?, function, trials, seed).map_err(value_err)?;
    to_json(&r)
}

#[pyfunction]
#[pyo3(signature = (module, rules, function, trials = 100, seed = 0))]
fn nitest(module: &Module, rules: BTreeMap<String, String>, function: &str, trials: usize, seed: u64) -> PyResult<String> {
    let r = validate::noninterference_check(&module.inner, &load_rules(Some(rules))?, function, trials, seed)
        .map_err(value_err)?;
    to_json(&r)
}

/// Shadow-operation table as CSV.
#[pyfunction]
#[pyo3(name = "bench", signature = (module, rules, entry = "main", args = Vec::new(), taint_config = None, default_len = DEFAULT_LEN))]
fn bench_table(
    module: &Module,
    rules: BTreeMap<String, String>,
    entry: &str,
    args: Vec<i64>,
    taint_config: Option<&str>,
    default_len: u64,
) -> PyResult<String> {
    let cfg = load_config(taint_config)?;
    let t = validate::bench(&module.inner, entry, &[args], &cfg, &load_rules(Some(rules))?, machine(None, default_len))
        .map_err(|t| PyRuntimeError::new_err(t.to_string()))?;
    Ok(t.to_csv())
}

/// Built-in memcpy benchmark program and its taint config JSON.
#[pyfunction]
fn memcpy_bench(n: u64) -> PyResult<(Module, String)> {
    let (m, cfg) = corpus::memcpy_bench(n);
    Ok((Module { inner: m }, to_json(&cfg)?))
}

#[pymodule]
fn sdft(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Module>()?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(generate_rules, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(nitest, m)?)?;
    m.add_function(wrap_pyfunction!(bench_table, m)?)?;
    m.add_function(wrap_pyfunction!(memcpy_bench, m)?)?;
    m.add("FIG1_IR", corpus::FIG1_SRC)?;
    m.add("FIG1_TAINT", corpus::FIG1_TAINT)?;
    m.add("LIB_IR", corpus::LIB_SRC)?;
    Ok(())
}
