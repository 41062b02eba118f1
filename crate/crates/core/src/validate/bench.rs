use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::ir::Module;
use crate::rules::TaintRuleProgram;
use crate::tracker::{run, MachineConfig, Mode, TaintConfig, Trap};

pub const BENCH_CSV_HEADER: &str = "program,mode,instr_executed_total,instr_executed_uninstrumented,\
shadow_ops_instr,shadow_ops_rules,shadow_ops_total,reduction,wall_ms";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: Mode,
    pub instr_executed_total: u64,
    pub instr_executed_uninstrumented: u64,
    pub shadow_ops_instr: u64,
    pub shadow_ops_rules: u64,
    pub wall_ms: f64,
}

impl BenchRow {
    pub fn shadow_ops(&self) -> u64 {
        self.shadow_ops_instr + self.shadow_ops_rules
    }

    pub fn uninstrumented_share(&self) -> f64 {
        self.instr_executed_uninstrumented as f64 / self.instr_executed_total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchTable {
    pub program: String,
    pub instr: BenchRow,
    pub hybrid: BenchRow,
}

impl BenchTable {
    /// Instruction-level shadow operations over hybrid ones.
    pub fn reduction(&self) -> f64 {
        self.instr.shadow_ops() as f64 / self.hybrid.shadow_ops().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{BENCH_CSV_HEADER}\n");
        for r in [&self.instr, &self.hybrid] {
            let mode = if r.mode == Mode::InstrOnly { "instr" } else { "hybrid" };
            let red = if r.mode == Mode::Hybrid { self.reduction() } else { 1.0 };
            writeln!(
                s,
                "{},{mode},{},{},{},{},{},{red:.3},{:.3}",
                self.program,
                r.instr_executed_total,
                r.instr_executed_uninstrumented,
                r.shadow_ops_instr,
                r.shadow_ops_rules,
                r.shadow_ops(),
                r.wall_ms
            )
            .unwrap();
        }
        s
    }
}

/// Runs `entry` on each argument list under both modes and sums the
/// counters.
pub fn bench(
    m: &Module,
    entry: &str,
    inputs: &[Vec<i64>],
    cfg: &TaintConfig,
    rules: &BTreeMap<String, TaintRuleProgram>,
    mcfg: MachineConfig,
) -> Result<BenchTable, Trap> {
    let mut rows = Vec::new();
    for mode in [Mode::InstrOnly, Mode::Hybrid] {
        let mut row = BenchRow {
            mode,
            instr_executed_total: 0,
            instr_executed_uninstrumented: 0,
            shadow_ops_instr: 0,
            shadow_ops_rules: 0,
            wall_ms: 0.0,
        };
        for args in inputs {
            let t = Instant::now();
            let r = run(m, entry, args, cfg, mode, rules, mcfg)?;
            row.wall_ms += t.elapsed().as_secs_f64() * 1e3;
            row.instr_executed_total += r.instr_executed_total;
            row.instr_executed_uninstrumented += r.instr_executed_uninstrumented;
            row.shadow_ops_instr += r.shadow_ops_instr;
            row.shadow_ops_rules += r.shadow_ops_rules;
        }
        rows.push(row);
    }
    let hybrid = rows.pop().expect("two rows");
    let instr = rows.pop().expect("two rows");
    Ok(BenchTable { program: entry.to_string(), instr, hybrid })
}
