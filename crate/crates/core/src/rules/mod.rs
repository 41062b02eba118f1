//! Taint rules compiled from summaries.
//!
//! Each summary entry becomes: reset the accumulator, gather the tags of
//! every input, read the output's current tag, then set the output to the
//! OR of both. Rules never clear taint.

mod serial;
mod stats;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{LayoutError, Module, Type};
use crate::summarize::{SlotKind, SlotRef, Summary};

pub use serial::{parse_rules, serialize_rules, RuleParseError, RULES_VERSION};
pub use stats::{rule_stats, stats_csv, RuleStats};

pub const DEFAULT_LEN: u64 = 64;

/// Where a slot's tag bytes live at run time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotBase {
    /// Argument `index`: its value shadow, or with `deref` the memory it
    /// points to.
    Param { index: u32 },
    /// The global's storage.
    Global { name: String },
    /// The return value shadow.
    Ret,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSlot {
    pub base: SlotBase,
    /// Address the argument value instead of its shadow.
    pub deref: bool,
    /// Byte offset added to the address (field offset).
    pub offset: u64,
    /// Summary slot this was compiled from.
    pub from: SlotRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RuleStep {
    /// `tag_x <- 0`; starts a new entry.
    ResetAcc,
    GatherFixed { slot: RuleSlot, bytes: u64 },
    /// Gathers `strlen + 1` bytes, scanning at most `max_len`.
    GatherString { slot: RuleSlot, max_len: u64 },
    /// `tag_o <- getTaint(out)`; `bytes` absent means string extent.
    ReadOut { slot: RuleSlot, bytes: Option<u64>, max_len: u64 },
    SetFixed { slot: RuleSlot, bytes: u64 },
    SetString { slot: RuleSlot, max_len: u64 },
}

impl RuleStep {
    pub fn slot(&self) -> Option<&RuleSlot> {
        match self {
            RuleStep::ResetAcc => None,
            RuleStep::GatherFixed { slot, .. }
            | RuleStep::GatherString { slot, .. }
            | RuleStep::ReadOut { slot, .. }
            | RuleStep::SetFixed { slot, .. }
            | RuleStep::SetString { slot, .. } => Some(slot),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaintRuleProgram {
    pub function: String,
    pub steps: Vec<RuleStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleOpts {
    pub default_len: u64,
}

impl Default for RuleOpts {
    fn default() -> Self {
        RuleOpts { default_len: DEFAULT_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("slot `{slot}` of `@{function}`: {message}")]
    Slot { function: String, slot: String, message: String },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

/// How a slot is read or written: a fixed number of bytes or a string.
enum Extent {
    Fixed(u64),
    String,
}

fn resolve(m: &Module, function: &str, s: &SlotRef) -> Result<(RuleSlot, Extent), RuleError> {
    let err = |message: &str| RuleError::Slot {
        function: function.to_string(),
        slot: s.to_string(),
        message: message.to_string(),
    };
    let layout = m.layout();
    let field = |region: &Type| -> Result<(u64, u64), RuleError> {
        let (off, fty) = layout.resolve_path(region, &s.field_path)?;
        Ok((off, layout.size_of(&fty)?))
    };
    match &s.kind {
        SlotKind::Param(i) => {
            let base = SlotBase::Param { index: *i };
            if !s.ty.is_pointer() {
                if !s.field_path.is_empty() {
                    return Err(err("field path on a scalar parameter"));
                }
                let n = m.size_of(&s.ty)?;
                return Ok((RuleSlot { base, deref: false, offset: 0, from: s.clone() }, Extent::Fixed(n)));
            }
            if s.ty.is_string_pointer() && s.field_path.is_empty() {
                return Ok((RuleSlot { base, deref: true, offset: 0, from: s.clone() }, Extent::String));
            }
            let pointee = s.ty.pointee().ok_or_else(|| err("not a pointer"))?;
            let (off, n) = field(pointee)?;
            Ok((RuleSlot { base, deref: true, offset: off, from: s.clone() }, Extent::Fixed(n)))
        }
        SlotKind::Global(g) => {
            let gl = m.global(g).ok_or_else(|| err("unknown global"))?;
            let (off, n) = field(&gl.ty)?;
            Ok((
                RuleSlot { base: SlotBase::Global { name: g.clone() }, deref: false, offset: off, from: s.clone() },
                Extent::Fixed(n),
            ))
        }
        SlotKind::Ret => {
            if !s.field_path.is_empty() {
                return Err(err("field path on the return value"));
            }
            let n = m.size_of(&s.ty)?;
            Ok((RuleSlot { base: SlotBase::Ret, deref: false, offset: 0, from: s.clone() }, Extent::Fixed(n)))
        }
    }
}

/// Compiles a summary into a rule program.
pub fn taint_rule_gen(s: &Summary, m: &Module, opts: RuleOpts) -> Result<TaintRuleProgram, RuleError> {
    let mut steps = Vec::new();
    for e in &s.entries {
        steps.push(RuleStep::ResetAcc);
        for inp in &e.ins {
            let (slot, ext) = resolve(m, &s.function, inp)?;
            steps.push(match ext {
                Extent::Fixed(bytes) => RuleStep::GatherFixed { slot, bytes },
                Extent::String => RuleStep::GatherString { slot, max_len: opts.default_len },
            });
        }
        let (slot, ext) = resolve(m, &s.function, &e.out)?;
        match ext {
            Extent::Fixed(bytes) => {
                steps.push(RuleStep::ReadOut { slot: slot.clone(), bytes: Some(bytes), max_len: opts.default_len });
                steps.push(RuleStep::SetFixed { slot, bytes });
            }
            Extent::String => {
                steps.push(RuleStep::ReadOut { slot: slot.clone(), bytes: None, max_len: opts.default_len });
                steps.push(RuleStep::SetString { slot, max_len: opts.default_len });
            }
        }
    }
    Ok(TaintRuleProgram { function: s.function.clone(), steps })
}

impl TaintRuleProgram {
    /// The (output, inputs) slot sets the program was compiled from.
    pub fn decompile(&self) -> Vec<(SlotRef, BTreeSet<SlotRef>)> {
        let mut out = Vec::new();
        let mut ins = BTreeSet::new();
        for st in &self.steps {
            match st {
                RuleStep::ResetAcc => ins.clear(),
                RuleStep::GatherFixed { slot, .. } | RuleStep::GatherString { slot, .. } => {
                    ins.insert(slot.from.clone());
                }
                RuleStep::ReadOut { .. } => {}
                RuleStep::SetFixed { slot, .. } | RuleStep::SetString { slot, .. } => {
                    out.push((slot.from.clone(), ins.clone()));
                }
            }
        }
        out
    }

    /// Number of entries compiled into the program.
    pub fn entry_count(&self) -> usize {
        self.steps.iter().filter(|s| matches!(s, RuleStep::ResetAcc)).count()
    }
}
