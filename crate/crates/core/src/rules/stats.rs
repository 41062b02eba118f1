use std::fmt::Write as _;

use serde::Serialize;

use super::TaintRuleProgram;
use crate::summarize::SlotKind;

/// Entry counts by input/output category. The return value counts as a
/// parameter-side output.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RuleStats {
    pub function: String,
    pub p2p: usize,
    pub p2g: usize,
    pub g2p: usize,
    pub g2g: usize,
    pub steps: usize,
}

pub fn rule_stats<'a>(programs: impl IntoIterator<Item = &'a TaintRuleProgram>) -> Vec<RuleStats> {
    let mut rows = Vec::new();
    for p in programs {
        let mut r = RuleStats { function: p.function.clone(), steps: p.steps.len(), ..Default::default() };
        for (out, ins) in p.decompile() {
            let g_out = matches!(out.kind, SlotKind::Global(_));
            let p_in = ins.iter().any(|s| matches!(s.kind, SlotKind::Param(_)));
            let g_in = ins.iter().any(|s| matches!(s.kind, SlotKind::Global(_)));
            match (p_in, g_out) {
                (true, false) => r.p2p += 1,
                (true, true) => r.p2g += 1,
                _ => {}
            }
            match (g_in, g_out) {
                (true, false) => r.g2p += 1,
                (true, true) => r.g2g += 1,
                _ => {}
            }
        }
        rows.push(r);
    }
    rows
}

/// CSV with header `function,p2p,p2g,g2p,g2g,steps`.
pub fn stats_csv(rows: &[RuleStats]) -> String {
    let mut s = String::from("function,p2p,p2g,g2p,g2g,steps\n");
    for r in rows {
        writeln!(s, "{},{},{},{},{},{}", r.function, r.p2p, r.p2g, r.g2p, r.g2g, r.steps).unwrap();
    }
    s
}
