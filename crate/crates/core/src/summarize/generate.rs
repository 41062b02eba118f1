use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};

use serde::Serialize;

use super::binding::{bind, NodeBinding};
use super::summary::{SlotKind, Summary};
use crate::ir::{Function, Module, Type};
use crate::pdg::{build_pdg, FindPathOpts, NodeId, Pdg, PdgError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SummarizeOpts {
    pub control_deps: bool,
}

impl SummarizeOpts {
    fn path_opts(self) -> FindPathOpts {
        FindPathOpts { control_deps: self.control_deps }
    }
}

/// Nodes reachable from `src` over paths of length at least one.
fn reach(g: &Pdg, src: NodeId, opts: FindPathOpts) -> HashSet<NodeId> {
    let mut seen = HashSet::new();
    let mut q = VecDeque::from([src]);
    while let Some(x) = q.pop_front() {
        for &(y, k) in g.successors(x) {
            if k.traversable(opts.control_deps) && seen.insert(y) {
                q.push_back(y);
            }
        }
    }
    seen
}

/// Emits `wp(t) <- wp(s)` for every source/target pair joined by a path,
/// skipping identical slots and outputs of a void return.
pub fn summary_gen(function: &str, binding: &NodeBinding, g: &Pdg, opts: SummarizeOpts) -> Summary {
    let mut pairs = Vec::new();
    for (s, ins) in &binding.sources {
        let r = reach(g, *s, opts.path_opts());
        for (t, outs) in &binding.targets {
            if t == s || !r.contains(t) {
                continue;
            }
            for out in outs {
                if out.kind == SlotKind::Ret && out.ty == Type::Void {
                    continue;
                }
                for inp in ins {
                    pairs.push((out.clone(), inp.clone()));
                }
            }
        }
    }
    Summary::from_pairs(function, opts.control_deps, pairs)
}

/// Builds the graph of `f` against `callees` and summarizes it.
pub fn summarize_function(
    m: &Module,
    f: &Function,
    callees: &BTreeMap<String, Summary>,
    opts: SummarizeOpts,
) -> Result<Summary, PdgError> {
    let g = build_pdg(m, f, callees)?;
    let b = bind(m, f, &g);
    Ok(summary_gen(&f.name, &b, &g, opts))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SummarizeDiagnostic {
    pub function: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LibrarySummaries {
    pub summaries: BTreeMap<String, Summary>,
    /// Library functions in the order they were processed.
    pub order: Vec<String>,
    pub diagnostics: Vec<SummarizeDiagnostic>,
}

/// Defined functions with every callee before its callers. Back edges of
/// recursive cycles are ignored here; graph construction rejects them.
pub fn callee_first_order(m: &Module) -> Vec<String> {
    fn visit(m: &Module, name: &str, seen: &mut BTreeSet<String>, out: &mut Vec<String>) {
        if !seen.insert(name.to_string()) {
            return;
        }
        let Some(f) = m.function(name) else { return };
        for c in f.callees() {
            visit(m, c, seen, out);
        }
        out.push(name.to_string());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for f in &m.functions {
        visit(m, &f.name, &mut seen, &mut out);
    }
    out
}

/// Summarizes every library function callee-first, feeding each summary to
/// its callers. Functions whose graph cannot be built (recursion) are
/// reported and skipped.
pub fn summarize_library(m: &Module, opts: SummarizeOpts) -> LibrarySummaries {
    summarize_library_with(m, opts, |m, f, callees| summarize_function(m, f, callees, opts))
}

pub(crate) fn summarize_library_with(
    m: &Module,
    _opts: SummarizeOpts,
    mut one: impl FnMut(&Module, &Function, &BTreeMap<String, Summary>) -> Result<Summary, PdgError>,
) -> LibrarySummaries {
    let mut out = LibrarySummaries::default();
    for name in callee_first_order(m) {
        let Some(f) = m.function(&name) else { continue };
        if !f.library {
            continue;
        }
        out.order.push(name.clone());
        match one(m, f, &out.summaries) {
            Ok(s) => {
                out.summaries.insert(name, s);
            }
            Err(e) => out.diagnostics.push(SummarizeDiagnostic { function: name, message: e.to_string() }),
        }
    }
    out
}
