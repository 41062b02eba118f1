//! Interprocedural program dependency graphs.
//!
//! Each library function gets one graph. Calls to functions that already have
//! a summary are represented by actual-in/actual-out nodes joined by summary
//! edges; calls to other defined functions pull in one shared copy of the
//! callee's body, connected through parameter-in/out edges.

mod alias;
mod build;
mod cfg;
mod export;
mod query;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::ir::{InstrId, LayoutError, Type};

pub use alias::{AbsLoc, PointsTo, Root};
pub use build::build_pdg;
pub use cfg::{control_dependences, postdominators, Cfg};
pub use query::{def_node, find_next_use, find_node, find_nodes, find_path, path_exists, FindPathOpts, Path, PATH_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// What an actual-in/actual-out node stands for at a call site.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallSlot {
    Arg(u32),
    Global(String),
    Ret,
}

impl fmt::Display for CallSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CallSlot::Arg(i) => write!(f, "{i}"),
            CallSlot::Global(g) => write!(f, "@{g}"),
            CallSlot::Ret => f.write_str("ret"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    FormalIn { index: u32, ty: Type },
    FormalOut { index: u32, ty: Type },
    ActualIn { call: InstrId, slot: CallSlot, ty: Type },
    /// `may_write` is set when the callee can modify the slot.
    ActualOut { call: InstrId, slot: CallSlot, ty: Type, may_write: bool },
    FieldNode { owner: NodeId, param_index: Option<u32>, field_index: u32, path: Vec<String>, ty: Type },
    GlobalValue { name: String, ty: Type },
    CallSite { callee: String, instr: InstrId },
    Return { instr: InstrId },
    Entry { function: String },
    General { instr: InstrId },
}

impl NodeKind {
    pub fn tag(&self) -> &'static str {
        match self {
            NodeKind::FormalIn { .. } => "FORMAL_IN",
            NodeKind::FormalOut { .. } => "FORMAL_OUT",
            NodeKind::ActualIn { .. } => "ACTUAL_IN",
            NodeKind::ActualOut { .. } => "ACTUAL_OUT",
            NodeKind::FieldNode { .. } => "FIELD",
            NodeKind::GlobalValue { .. } => "GLOBAL_VALUE",
            NodeKind::CallSite { .. } => "CALL",
            NodeKind::Return { .. } => "RETURN",
            NodeKind::Entry { .. } => "ENTRY",
            NodeKind::General { .. } => "GENERAL",
        }
    }

    /// The instruction this node stands for, if any.
    pub fn instr(&self) -> Option<InstrId> {
        match self {
            NodeKind::CallSite { instr, .. } | NodeKind::Return { instr } | NodeKind::General { instr } => {
                Some(*instr)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Function whose body the node belongs to.
    pub function: String,
    /// Printed instruction, for instruction nodes.
    pub text: Option<String>,
}

impl PdgNode {
    pub fn label(&self) -> String {
        match &self.kind {
            NodeKind::FormalIn { index, ty } | NodeKind::FormalOut { index, ty } => {
                format!("{}: {index} {ty}", self.kind.tag())
            }
            NodeKind::ActualIn { call, slot, ty } => format!("ACTUAL_IN: {slot} {ty} @{call}"),
            NodeKind::ActualOut { call, slot, ty, .. } => format!("ACTUAL_OUT: {slot} {ty} @{call}"),
            NodeKind::FieldNode { param_index, field_index, ty, .. } => match param_index {
                Some(p) => format!("{ty} arg_pos: {p} - f_id: {field_index}"),
                None => format!("{ty} f_id: {field_index}"),
            },
            NodeKind::GlobalValue { name, .. } => format!("GLOBAL_VALUE:@{name}"),
            NodeKind::Entry { function } => format!("<<ENTRY>> {function}"),
            NodeKind::CallSite { .. } | NodeKind::Return { .. } | NodeKind::General { .. } => {
                self.text.clone().unwrap_or_default()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum EdgeKind {
    Cdep,
    Dgnrl,
    Dalias,
    DefUse,
    Raw,
    Pform,
    Pact,
    Pfld,
    Pin,
    Pout,
    Call,
    /// Callee summary dependency between an actual-in and an actual-out.
    Summary,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 12] = [
        EdgeKind::Cdep,
        EdgeKind::Dgnrl,
        EdgeKind::Dalias,
        EdgeKind::DefUse,
        EdgeKind::Raw,
        EdgeKind::Pform,
        EdgeKind::Pact,
        EdgeKind::Pfld,
        EdgeKind::Pin,
        EdgeKind::Pout,
        EdgeKind::Call,
        EdgeKind::Summary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Cdep => "CDEP",
            EdgeKind::Dgnrl => "D_gnrl",
            EdgeKind::Dalias => "D_ALIAS",
            EdgeKind::DefUse => "DEF_USE",
            EdgeKind::Raw => "RAW",
            EdgeKind::Pform => "P_form",
            EdgeKind::Pact => "P_act",
            EdgeKind::Pfld => "P_fld",
            EdgeKind::Pin => "P_in",
            EdgeKind::Pout => "P_out",
            EdgeKind::Call => "CALL",
            EdgeKind::Summary => "SUMMARY",
        }
    }

    /// Whether path search may follow this edge.
    pub fn traversable(self, control_deps: bool) -> bool {
        match self {
            EdgeKind::Dalias | EdgeKind::Call => false,
            EdgeKind::Cdep => control_deps,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PdgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone)]
pub struct Pdg {
    pub function: String,
    pub nodes: Vec<PdgNode>,
    pub edges: Vec<PdgEdge>,
    /// Instruction id to node, for the graph's own function.
    pub instr_index: BTreeMap<InstrId, NodeId>,
    /// Defined callees whose bodies were included, in inclusion order.
    pub inlined: Vec<String>,
    /// Instruction nodes of included callee bodies.
    pub callee_instr_index: BTreeMap<(String, InstrId), NodeId>,
    succ: Vec<Vec<(NodeId, EdgeKind)>>,
    pred: Vec<Vec<(NodeId, EdgeKind)>>,
}

impl Pdg {
    fn new(function: String) -> Pdg {
        Pdg {
            function,
            nodes: Vec::new(),
            edges: Vec::new(),
            instr_index: BTreeMap::new(),
            inlined: Vec::new(),
            callee_instr_index: BTreeMap::new(),
            succ: Vec::new(),
            pred: Vec::new(),
        }
    }

    fn add_node(&mut self, function: &str, kind: NodeKind, text: Option<String>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(PdgNode { id, kind, function: function.to_string(), text });
        self.succ.push(Vec::new());
        self.pred.push(Vec::new());
        id
    }

    /// Adds an edge unless an identical one exists.
    fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        if self.succ[src.0 as usize].contains(&(dst, kind)) {
            return;
        }
        self.edges.push(PdgEdge { src, dst, kind });
        self.succ[src.0 as usize].push((dst, kind));
        self.pred[dst.0 as usize].push((src, kind));
    }

    pub fn node(&self, id: NodeId) -> &PdgNode {
        &self.nodes[id.0 as usize]
    }

    pub fn successors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        &self.succ[id.0 as usize]
    }

    pub fn predecessors(&self, id: NodeId) -> &[(NodeId, EdgeKind)] {
        &self.pred[id.0 as usize]
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, kind: EdgeKind) -> bool {
        self.succ[src.0 as usize].contains(&(dst, kind))
    }

    pub fn edges_of_kind(&self, kind: EdgeKind) -> impl Iterator<Item = &PdgEdge> {
        self.edges.iter().filter(move |e| e.kind == kind)
    }

    pub fn entry(&self) -> NodeId {
        self.nodes
            .iter()
            .find(|n| n.function == self.function && matches!(n.kind, NodeKind::Entry { .. }))
            .map(|n| n.id)
            .expect("every graph has an entry node")
    }

    pub fn formal_in(&self, index: u32) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| {
                n.function == self.function
                    && matches!(n.kind, NodeKind::FormalIn { index: i, .. } if i == index)
            })
            .map(|n| n.id)
    }

    pub fn global_value(&self, name: &str) -> Option<NodeId> {
        self.nodes
            .iter()
            .find(|n| matches!(&n.kind, NodeKind::GlobalValue { name: g, .. } if g == name))
            .map(|n| n.id)
    }

    /// Nodes belonging to the graph's own function (not included callees).
    pub fn own_nodes(&self) -> impl Iterator<Item = &PdgNode> {
        self.nodes
            .iter()
            .filter(|n| n.function == self.function || matches!(n.kind, NodeKind::GlobalValue { .. }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PdgError {
    #[error("unknown function `@{0}`")]
    UnknownFunction(String),
    #[error("call to `@{callee}` in `@{caller}` has no summary and no definition")]
    UnresolvedCallee { caller: String, callee: String },
    #[error("recursive call cycle: {}", .0.join(" -> "))]
    Recursion(Vec<String>),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}
