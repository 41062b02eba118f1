//! Evaluation harnesses: mode comparison, noninterference and benchmarks.

mod bench;
mod compare;
pub mod inputs;
mod ni;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ir::{Function, Module};
use crate::rules::{taint_rule_gen, RuleError, RuleOpts, TaintRuleProgram};
use crate::summarize::{summarize_library, SummarizeOpts};
use crate::tracker::{Machine, MachineConfig, Mode, TaintConfig, Trap, Value};

pub use bench::{bench, BenchRow, BenchTable, BENCH_CSV_HEADER};
pub use compare::{
    aggregate_ratio, mode_transparency, oracle_compare, ComparisonReport, ContainmentViolation, StrategyStats,
    TransparencyReport,
};
pub use inputs::{InputError, ParamShape, ParamValue};
pub use ni::{noninterference_check, NIReport, NiTrial, NiViolation};

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("`@{0}` has no rule program")]
    NoRules(String),
    #[error(transparent)]
    Rules(#[from] RuleError),
}

/// Summarizes every library function and compiles the summaries.
pub fn library_rules(
    m: &Module,
    opts: SummarizeOpts,
    rule_opts: RuleOpts,
) -> Result<BTreeMap<String, TaintRuleProgram>, RuleError> {
    let lib = summarize_library(m, opts);
    let mut out = BTreeMap::new();
    for s in lib.summaries.values() {
        out.insert(s.function.clone(), taint_rule_gen(s, m, rule_opts)?);
    }
    Ok(out)
}

pub(crate) fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (trial as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

pub(crate) fn function<'m>(m: &'m Module, name: &str) -> Result<&'m Function, InputError> {
    m.function(name).ok_or_else(|| InputError::UnknownFunction(name.to_string()))
}

/// State after one harness call of a function.
pub(crate) struct Outcome<'m> {
    pub mach: Machine<'m>,
    pub placed: Vec<inputs::Placed>,
    pub result: Result<Value, Trap>,
}

impl Outcome<'_> {
    pub fn persistent_tags(&self) -> BTreeMap<u64, u8> {
        let globals = self.mach.global_ranges();
        let (lo, hi) = (self.mach.heap_base(), self.mach.heap_top());
        self.mach
            .tags()
            .tainted()
            .into_iter()
            .filter(|(a, _)| (*a >= lo && *a < hi) || globals.iter().any(|(_, g, n)| a >= g && *a < g + n))
            .collect()
    }

    pub fn ret_tags(&self) -> Vec<u8> {
        self.result.as_ref().map(|v| v.tags.clone()).unwrap_or_default()
    }
}

/// Places the inputs, taints the parameters in `mask` with one label bit
/// per parameter index, and calls `f`.
pub(crate) fn run_once<'m>(
    m: &'m Module,
    f: &Function,
    rules: &BTreeMap<String, TaintRuleProgram>,
    mode: Mode,
    shapes: &[ParamShape],
    vals: &[ParamValue],
    mask: u64,
) -> Outcome<'m> {
    let mut mach = Machine::new(m, mode, rules.clone(), TaintConfig::default(), MachineConfig::default())
        .expect("corpus modules fit in memory");
    let placed = inputs::place(&mut mach, shapes, vals);
    let mut args = Vec::with_capacity(placed.len());
    for (i, p) in placed.iter().enumerate() {
        let mut v = p.value.clone();
        if mask >> i & 1 == 1 {
            let label = 1u8 << (i % 8);
            match p.region {
                Some((a, n)) => mach.tags_mut().set_taint(a, label, n),
                None => v.tags.fill(label),
            }
        }
        args.push(v);
    }
    let result = mach.call(&f.name, args);
    Outcome { mach, placed, result }
}
