use std::collections::BTreeMap;

use serde::Serialize;

use super::inputs::{gen_inputs, shapes};
use super::{function, run_once, trial_rng, ValidateError};
use crate::ir::Module;
use crate::rules::TaintRuleProgram;
use crate::tracker::Mode;

/// Most tainting strategies tried per function.
pub const MAX_STRATEGIES: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyStats {
    /// Tainted parameter indices.
    pub params: Vec<u32>,
    pub trials: usize,
    pub avg_tainted_instr: f64,
    pub avg_tainted_hybrid: f64,
    pub return_tainted_instr: bool,
    pub return_tainted_hybrid: bool,
}

/// A persistent location holding a label bit under instruction-level
/// tracking that the hybrid run lacks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContainmentViolation {
    pub trial: usize,
    pub params: Vec<u32>,
    /// `mem:0x...` or `ret[k]`.
    pub location: String,
    pub tag_instr: u8,
    pub tag_hybrid: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub function: String,
    pub trials: usize,
    /// Averages over strategies of the per-strategy averages.
    pub avg_tainted_bytes_instr: f64,
    pub avg_tainted_bytes_hybrid: f64,
    /// Hybrid over instruction-level; absent when nothing was tainted.
    pub ratio: Option<f64>,
    pub return_tainted_instr: bool,
    pub return_tainted_hybrid: bool,
    pub strategies: Vec<StrategyStats>,
    pub violations: Vec<ContainmentViolation>,
    /// Trials that trapped, with the trap text of each mode.
    pub traps: Vec<(usize, String)>,
}

impl ComparisonReport {
    pub fn contained(&self) -> bool {
        self.violations.is_empty() && self.traps.is_empty()
    }
}

fn strategy_params(mask: u64) -> Vec<u32> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Runs `function` under both modes for every nonempty subset of its
/// parameters (capped at 256), tainting the chosen parameters whole, and
/// checks that hybrid taint covers instruction-level taint on persistent
/// locations.
pub fn oracle_compare(
    m: &Module,
    rules: &BTreeMap<String, TaintRuleProgram>,
    name: &str,
    trials: usize,
    seed: u64,
) -> Result<ComparisonReport, ValidateError> {
    let f = function(m, name)?;
    if !rules.contains_key(name) {
        return Err(ValidateError::NoRules(name.to_string()));
    }
    let shapes = shapes(m, f)?;
    let k = shapes.len().min(63);
    let nstrat = ((1u64 << k) - 1).min(MAX_STRATEGIES as u64) as usize;
    let mut sums = vec![(0usize, 0usize, 0usize, false, false); nstrat];
    let mut violations = Vec::new();
    let mut traps = Vec::new();
    if nstrat > 0 {
        for t in 0..trials {
            let si = t % nstrat;
            let mask = si as u64 + 1;
            let mut rng = trial_rng(seed, t);
            let vals = gen_inputs(m, &mut rng, &shapes);
            let a = run_once(m, f, rules, Mode::InstrOnly, &shapes, &vals, mask);
            let b = run_once(m, f, rules, Mode::Hybrid, &shapes, &vals, mask);
            if a.result.is_err() || b.result.is_err() {
                let text = |r: &Result<_, crate::tracker::Trap>| match r {
                    Ok(_) => "ok".to_string(),
                    Err(e) => e.to_string(),
                };
                traps.push((t, format!("instr: {}; hybrid: {}", text(&a.result), text(&b.result))));
                continue;
            }
            let (ra, rb) = (a.ret_tags(), b.ret_tags());
            let ta = a.mach.tags().tainted_count();
            let tb = b.mach.tags().tainted_count();
            let s = &mut sums[si];
            s.0 += 1;
            s.1 += ta;
            s.2 += tb;
            s.3 |= ra.iter().any(|&x| x != 0);
            s.4 |= rb.iter().any(|&x| x != 0);

            let hb = b.persistent_tags();
            for (addr, ti) in a.persistent_tags() {
                let th = hb.get(&addr).copied().unwrap_or(0);
                if ti & !th != 0 {
                    violations.push(ContainmentViolation {
                        trial: t,
                        params: strategy_params(mask),
                        location: format!("mem:{addr:#x}"),
                        tag_instr: ti,
                        tag_hybrid: th,
                    });
                }
            }
            for (i, &ti) in ra.iter().enumerate() {
                let th = rb.get(i).copied().unwrap_or(0);
                if ti & !th != 0 {
                    violations.push(ContainmentViolation {
                        trial: t,
                        params: strategy_params(mask),
                        location: format!("ret[{i}]"),
                        tag_instr: ti,
                        tag_hybrid: th,
                    });
                }
            }
        }
    }
    let strategies: Vec<StrategyStats> = sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 > 0)
        .map(|(i, s)| StrategyStats {
            params: strategy_params(i as u64 + 1),
            trials: s.0,
            avg_tainted_instr: s.1 as f64 / s.0 as f64,
            avg_tainted_hybrid: s.2 as f64 / s.0 as f64,
            return_tainted_instr: s.3,
            return_tainted_hybrid: s.4,
        })
        .collect();
    let n = strategies.len().max(1) as f64;
    let ai = strategies.iter().map(|s| s.avg_tainted_instr).sum::<f64>() / n;
    let ah = strategies.iter().map(|s| s.avg_tainted_hybrid).sum::<f64>() / n;
    Ok(ComparisonReport {
        function: name.to_string(),
        trials,
        avg_tainted_bytes_instr: ai,
        avg_tainted_bytes_hybrid: ah,
        ratio: (ai > 0.0).then(|| ah / ai),
        return_tainted_instr: strategies.iter().any(|s| s.return_tainted_instr),
        return_tainted_hybrid: strategies.iter().any(|s| s.return_tainted_hybrid),
        strategies,
        violations,
        traps,
    })
}

/// Total hybrid tainted bytes over total instruction-level tainted bytes,
/// summing the per-function averages; absent when nothing was tainted.
pub fn aggregate_ratio<'a>(reports: impl IntoIterator<Item = &'a ComparisonReport>) -> Option<f64> {
    let (i, h) = reports
        .into_iter()
        .fold((0.0, 0.0), |(i, h), r| (i + r.avg_tainted_bytes_instr, h + r.avg_tainted_bytes_hybrid));
    (i > 0.0).then(|| h / i)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TransparencyReport {
    pub function: String,
    pub trials: usize,
    /// Trials whose exit value, trap or final memory differed.
    pub mismatches: Vec<usize>,
}

/// Runs `function` on random inputs under both modes, with every parameter
/// tainted, and compares the concrete results.
pub fn mode_transparency(
    m: &Module,
    rules: &BTreeMap<String, TaintRuleProgram>,
    name: &str,
    trials: usize,
    seed: u64,
) -> Result<TransparencyReport, ValidateError> {
    let f = function(m, name)?;
    let shapes = shapes(m, f)?;
    let mut mismatches = Vec::new();
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let vals = gen_inputs(m, &mut rng, &shapes);
        let a = run_once(m, f, rules, Mode::InstrOnly, &shapes, &vals, u64::MAX);
        let b = run_once(m, f, rules, Mode::Hybrid, &shapes, &vals, u64::MAX);
        let same_result = match (&a.result, &b.result) {
            (Ok(x), Ok(y)) => x.bits == y.bits,
            (Err(x), Err(y)) => x == y,
            _ => false,
        };
        if !same_result || a.mach.memory() != b.mach.memory() {
            mismatches.push(t);
        }
    }
    Ok(TransparencyReport { function: name.to_string(), trials, mismatches })
}
