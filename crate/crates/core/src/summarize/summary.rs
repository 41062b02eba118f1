use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{parse_type, AggregateDecl, Module, Type};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Param(u32),
    Global(String),
    Ret,
}

/// A parameter, global or the return value, optionally narrowed to a field.
///
/// `ty` is the declared type of the parameter, global or return value; the
/// field's own type follows from `field_path`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub kind: SlotKind,
    pub ty: Type,
    pub field_path: Vec<String>,
}

impl SlotRef {
    pub fn param(index: u32, ty: Type) -> SlotRef {
        SlotRef { kind: SlotKind::Param(index), ty, field_path: Vec::new() }
    }

    pub fn global(name: impl Into<String>, ty: Type) -> SlotRef {
        SlotRef { kind: SlotKind::Global(name.into()), ty, field_path: Vec::new() }
    }

    pub fn ret(ty: Type) -> SlotRef {
        SlotRef { kind: SlotKind::Ret, ty, field_path: Vec::new() }
    }

    pub fn with_path(mut self, path: Vec<String>) -> SlotRef {
        self.field_path = path;
        self
    }

    /// Same parameter/global/return, ignoring the field path.
    pub fn same_base(&self, other: &SlotRef) -> bool {
        self.kind == other.kind
    }

    /// True when writing `self` writes (part of) `other`: same base and one
    /// field path is a prefix of the other.
    pub fn overlaps(&self, other: &SlotRef) -> bool {
        self.kind == other.kind
            && self
                .field_path
                .iter()
                .zip(&other.field_path)
                .all(|(a, b)| a == b)
    }
}

impl fmt::Display for SlotRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SlotKind::Param(i) => write!(f, "param{i}")?,
            SlotKind::Global(g) => write!(f, "@{g}")?,
            SlotKind::Ret => f.write_str("ret")?,
        }
        for p in &self.field_path {
            write!(f, ".{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummaryEntry {
    pub out: SlotRef,
    pub ins: BTreeSet<SlotRef>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub function: String,
    pub control_deps: bool,
    /// Sorted by output slot; no output repeats.
    pub entries: Vec<SummaryEntry>,
}

impl Summary {
    pub fn entry(&self, out: &SlotRef) -> Option<&SummaryEntry> {
        self.entries.iter().find(|e| &e.out == out)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Builds a summary from (out, in) pairs, merging by output and dropping
    /// self-dependencies.
    pub fn from_pairs(
        function: impl Into<String>,
        control_deps: bool,
        pairs: impl IntoIterator<Item = (SlotRef, SlotRef)>,
    ) -> Summary {
        let mut map: std::collections::BTreeMap<SlotRef, BTreeSet<SlotRef>> = Default::default();
        for (out, inp) in pairs {
            if out != inp {
                map.entry(out).or_default().insert(inp);
            }
        }
        Summary {
            function: function.into(),
            control_deps,
            entries: map.into_iter().map(|(out, ins)| SummaryEntry { out, ins }).collect(),
        }
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}:", self.function)?;
        if self.entries.is_empty() {
            return f.write_str(" {}");
        }
        for e in &self.entries {
            write!(f, " {} <- {{", e.out)?;
            for (i, s) in e.ins.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{s}")?;
            }
            f.write_str("}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SlotJson {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    index: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    name: Option<String>,
    #[serde(rename = "type")]
    ty: String,
    #[serde(rename = "fieldPath", default)]
    field_path: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct EntryJson {
    out: SlotJson,
    ins: Vec<SlotJson>,
}

#[derive(Serialize, Deserialize)]
struct SummaryJson {
    function: String,
    #[serde(rename = "controlDeps")]
    control_deps: bool,
    entries: Vec<EntryJson>,
}

#[derive(Debug, Error)]
pub enum SummaryJsonError {
    #[error("invalid summary JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid slot: {0}")]
    Slot(String),
}

fn slot_to_json(s: &SlotRef) -> SlotJson {
    let (kind, index, name) = match &s.kind {
        SlotKind::Param(i) => ("param", Some(*i), None),
        SlotKind::Global(g) => ("global", None, Some(g.clone())),
        SlotKind::Ret => ("ret", None, None),
    };
    SlotJson {
        kind: kind.into(),
        index,
        name,
        ty: s.ty.to_string(),
        field_path: s.field_path.clone(),
    }
}

fn slot_from_json(j: SlotJson, aggs: &[AggregateDecl]) -> Result<SlotRef, SummaryJsonError> {
    let ty = parse_type(&j.ty, aggs).map_err(|e| SummaryJsonError::Slot(e.to_string()))?;
    let kind = match j.kind.as_str() {
        "param" => SlotKind::Param(
            j.index.ok_or_else(|| SummaryJsonError::Slot("param slot without index".into()))?,
        ),
        "global" => SlotKind::Global(
            j.name.ok_or_else(|| SummaryJsonError::Slot("global slot without name".into()))?,
        ),
        "ret" => SlotKind::Ret,
        other => return Err(SummaryJsonError::Slot(format!("unknown slot kind `{other}`"))),
    };
    Ok(SlotRef { kind, ty, field_path: j.field_path })
}

impl Summary {
    pub fn to_json(&self) -> String {
        let j = SummaryJson {
            function: self.function.clone(),
            control_deps: self.control_deps,
            entries: self
                .entries
                .iter()
                .map(|e| EntryJson {
                    out: slot_to_json(&e.out),
                    ins: e.ins.iter().map(slot_to_json).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&j).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Parses summary JSON, resolving aggregate type names against `m`.
    pub fn from_json(text: &str, m: &Module) -> Result<Summary, SummaryJsonError> {
        let j: SummaryJson = serde_json::from_str(text)?;
        let pairs = j
            .entries
            .into_iter()
            .map(|e| {
                let out = slot_from_json(e.out, &m.aggregates)?;
                let ins = e
                    .ins
                    .into_iter()
                    .map(|s| slot_from_json(s, &m.aggregates))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ins.into_iter().map(move |i| (out.clone(), i)).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>, SummaryJsonError>>()?;
        Ok(Summary::from_pairs(j.function, j.control_deps, pairs.into_iter().flatten()))
    }
}
