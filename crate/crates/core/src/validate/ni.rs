use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use super::inputs::{gen_inputs, regen_param, shapes, ParamShape, ParamValue};
use super::{function, run_once, trial_rng, Outcome, ValidateError};
use crate::ir::{AggregateTable, Module};
use crate::rules::TaintRuleProgram;
use crate::summarize::{SlotKind, SlotRef};
use crate::tracker::Mode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NiTrial {
    pub trial: usize,
    /// The tainted (high) input slot.
    pub high: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NiViolation {
    pub trial: usize,
    pub high: String,
    /// Output object whose low bytes differed.
    pub output: String,
    pub offsets: Vec<u64>,
    pub first: Vec<u8>,
    pub second: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NIReport {
    pub function: String,
    pub trials: usize,
    pub seed: u64,
    pub inputs: Vec<NiTrial>,
    pub violations: Vec<NiViolation>,
}

/// Byte range of `slot` in the state of `o`: param objects and globals by
/// address, the return value as `None`.
fn slot_range(m: &Module, o: &Outcome<'_>, slot: &SlotRef) -> Option<(u64, u64)> {
    let layout = m.layout();
    match &slot.kind {
        SlotKind::Param(i) => {
            let p = o.placed.get(*i as usize)?;
            let (a, _) = p.region?;
            if slot.ty.is_string_pointer() && slot.field_path.is_empty() {
                return Some((a, p.capacity));
            }
            let (off, t) = layout.resolve_path(slot.ty.pointee()?, &slot.field_path).ok()?;
            Some((a + off, layout.size_of(&t).ok()?))
        }
        SlotKind::Global(g) => {
            let a = o.mach.global_addr(g)?;
            let (off, t) = layout.resolve_path(&m.global(g)?.ty, &slot.field_path).ok()?;
            Some((a + off, layout.size_of(&t).ok()?))
        }
        SlotKind::Ret => None,
    }
}

/// Twin executions differing only in one high input; every output the
/// rules do not derive from it must come out equal.
pub fn noninterference_check(
    m: &Module,
    rules: &BTreeMap<String, TaintRuleProgram>,
    name: &str,
    trials: usize,
    seed: u64,
) -> Result<NIReport, ValidateError> {
    let f = function(m, name)?;
    let prog = rules.get(name).ok_or_else(|| ValidateError::NoRules(name.to_string()))?;
    let shapes = shapes(m, f)?;
    let entries = prog.decompile();
    let mut inputs = Vec::new();
    let mut violations = Vec::new();
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let base = gen_inputs(m, &mut rng, &shapes);
        let mut twin = base.clone();
        let high = if shapes.is_empty() {
            None
        } else {
            let h = rng.random_range(0..shapes.len());
            let mut slot = SlotRef::param(h as u32, f.params[h].ty.clone());
            let fresh = regen_param(m, &mut rng, &shapes, &base, h);
            let field = match &shapes[h] {
                ParamShape::Region(ty) if ty.is_aggregate() && rng.random_bool(0.5) => {
                    let d = m.aggregate(ty.aggregate_name().unwrap_or_default());
                    d.map(|d| d.fields[rng.random_range(0..d.fields.len())].name.clone())
                }
                _ => None,
            };
            match (field, &fresh, &mut twin[h]) {
                (Some(fname), ParamValue::Region(new), ParamValue::Region(old)) => {
                    let pointee = f.params[h].ty.pointee().expect("region is behind a pointer");
                    let (off, fty) = m.layout().resolve_path(pointee, std::slice::from_ref(&fname)).expect("field");
                    let n = m.size_of(&fty).unwrap_or(0);
                    let r = off as usize..(off + n) as usize;
                    old[r.clone()].copy_from_slice(&new[r]);
                    slot = slot.with_path(vec![fname]);
                }
                _ => twin[h] = fresh,
            }
            Some(slot)
        };
        let high_name = high.as_ref().map_or_else(|| "none".to_string(), |s| s.to_string());
        inputs.push(NiTrial { trial: t, high: high_name.clone() });

        let a = run_once(m, f, rules, Mode::Hybrid, &shapes, &base, 0);
        let b = run_once(m, f, rules, Mode::Hybrid, &shapes, &twin, 0);

        let mut high_outs: BTreeSet<SlotRef> = BTreeSet::new();
        if let Some(h) = &high {
            high_outs.insert(h.clone());
            for (out, ins) in &entries {
                if ins.iter().any(|s| s.overlaps(h) || h.overlaps(s)) {
                    high_outs.insert(out.clone());
                }
            }
        }
        let ret_high = high_outs.iter().any(|s| s.kind == SlotKind::Ret);
        let high_ranges: Vec<(u64, u64)> = high_outs.iter().filter_map(|s| slot_range(m, &a, s)).collect();
        let is_high = |addr: u64| high_ranges.iter().any(|(s, n)| addr >= *s && addr < s + n);

        let mut objects: Vec<(String, u64, u64)> = Vec::new();
        for (i, p) in a.placed.iter().enumerate() {
            if p.region.is_some() {
                objects.push((format!("param{i}"), p.value.bits, p.capacity));
            }
        }
        for (g, addr, n) in a.mach.global_ranges() {
            objects.push((format!("@{g}"), addr, n));
        }
        match (&a.result, &b.result) {
            (Ok(x), Ok(y)) => {
                if !ret_high && x.bits != y.bits {
                    violations.push(NiViolation {
                        trial: t,
                        high: high_name.clone(),
                        output: "ret".into(),
                        offsets: vec![0],
                        first: x.bits.to_le_bytes().to_vec(),
                        second: y.bits.to_le_bytes().to_vec(),
                    });
                }
            }
            (x, y) if x.is_err() != y.is_err() => {
                violations.push(NiViolation {
                    trial: t,
                    high: high_name.clone(),
                    output: "termination".into(),
                    offsets: vec![],
                    first: vec![],
                    second: vec![],
                });
            }
            _ => {}
        }
        for (oname, addr, n) in objects {
            let (Some(x), Some(y)) = (a.mach.read(addr, n), b.mach.read(addr, n)) else { continue };
            let mut v = NiViolation {
                trial: t,
                high: high_name.clone(),
                output: oname,
                offsets: vec![],
                first: vec![],
                second: vec![],
            };
            for k in 0..n as usize {
                if x[k] != y[k] && !is_high(addr + k as u64) {
                    v.offsets.push(k as u64);
                    v.first.push(x[k]);
                    v.second.push(y[k]);
                }
            }
            if !v.offsets.is_empty() {
                violations.push(v);
            }
        }
    }
    Ok(NIReport { function: name.to_string(), trials, seed, inputs, violations })
}
