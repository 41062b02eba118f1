//! Source and target node derivation and the node-to-slot mapping.
//!
//! Which slot (and which field of it) a memory access touches is read off the
//! points-to offsets, which only constant gep indices produce.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::summary::SlotRef;
use crate::ir::{Function, InstrKind, Module, Operand, Type};
use crate::pdg::{AbsLoc, CallSlot, NodeId, NodeKind, Pdg, PointsTo, Root};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeBinding {
    /// Source nodes with the input slots they stand for.
    pub sources: BTreeMap<NodeId, BTreeSet<SlotRef>>,
    /// Target nodes with the output slots they stand for.
    pub targets: BTreeMap<NodeId, BTreeSet<SlotRef>>,
}

impl NodeBinding {
    fn add_source(&mut self, n: NodeId, s: SlotRef) {
        self.sources.entry(n).or_default().insert(s);
    }

    fn add_target(&mut self, n: NodeId, s: SlotRef) {
        self.targets.entry(n).or_default().insert(s);
    }

    pub fn source_nodes(&self) -> BTreeSet<NodeId> {
        self.sources.keys().copied().collect()
    }

    pub fn target_nodes(&self) -> BTreeSet<NodeId> {
        self.targets.keys().copied().collect()
    }

    /// Slots bound to `n`, as source or target.
    pub fn wp(&self, n: NodeId) -> BTreeSet<&SlotRef> {
        self.sources.get(&n).into_iter().chain(self.targets.get(&n)).flatten().collect()
    }

    pub fn merge(mut self, other: NodeBinding) -> NodeBinding {
        for (n, s) in other.sources {
            self.sources.entry(n).or_default().extend(s);
        }
        for (n, s) in other.targets {
            self.targets.entry(n).or_default().extend(s);
        }
        self
    }
}

/// Field path of the innermost struct field covering `[off, off + size)`.
/// Unions are not refined since their fields overlap.
pub fn path_at(m: &Module, ty: &Type, mut off: u64, size: u64) -> Vec<String> {
    let layout = m.layout();
    let mut path = Vec::new();
    let mut cur = ty.clone();
    while let Type::Struct(name) = &cur {
        let Some(decl) = m.aggregate_decl(name) else { break };
        let mut next = None;
        for (i, f) in decl.fields.iter().enumerate() {
            let (Ok(fo), Ok(fs)) = (layout.field_offset_by_index(name, i), layout.size_of(&f.ty)) else {
                continue;
            };
            if fo <= off && off.saturating_add(size) <= fo + fs {
                next = Some((f.name.clone(), f.ty.clone(), fo));
                break;
            }
        }
        let Some((fname, fty, fo)) = next else { break };
        path.push(fname);
        off -= fo;
        cur = fty;
    }
    path
}

/// Field path named by a gep's constant struct indices.
fn gep_path(m: &Module, base_ty: &Type, indices: &[Operand]) -> Option<Vec<String>> {
    if indices.first()?.as_const()? != 0 {
        return None;
    }
    let mut path = Vec::new();
    let mut cur = base_ty.clone();
    for idx in &indices[1..] {
        let Type::Struct(n) = &cur else { break };
        let k = usize::try_from(idx.as_const()?).ok()?;
        let f = m.aggregate_decl(n)?.fields.get(k)?;
        path.push(f.name.clone());
        cur = f.ty.clone();
    }
    Some(path)
}

struct Ctx<'a> {
    m: &'a Module,
    f: &'a Function,
    g: &'a Pdg,
    pts: HashMap<String, PointsTo>,
}

impl<'a> Ctx<'a> {
    fn new(m: &'a Module, f: &'a Function, g: &'a Pdg) -> Ctx<'a> {
        let mut pts = HashMap::new();
        pts.insert(f.name.clone(), PointsTo::analyze(m, f));
        for name in &g.inlined {
            if let Some(cf) = m.function(name) {
                pts.insert(name.clone(), PointsTo::analyze(m, cf));
            }
        }
        Ctx { m, f, g, pts }
    }

    fn function(&self, name: &str) -> Option<&'a Function> {
        if name == self.f.name {
            Some(self.f)
        } else {
            self.m.function(name)
        }
    }

    /// The slot a root stands for in body `body`, with the type of the
    /// storage it names. Parameters only count in the graph's own body.
    fn root_slot(&self, body: &str, root: &Root) -> Option<(SlotRef, Type)> {
        match root {
            Root::Param(i) if body == self.f.name => {
                let p = self.f.params.get(*i as usize)?;
                Some((SlotRef::param(*i, p.ty.clone()), p.ty.pointee()?.clone()))
            }
            Root::Global(g) => {
                let gl = self.m.global(g)?;
                Some((SlotRef::global(g.clone(), gl.ty.clone()), gl.ty.clone()))
            }
            _ => None,
        }
    }

    /// Slots touched by a sized access at `locs`.
    fn access_slots(&self, body: &str, locs: &BTreeSet<AbsLoc>, size: u64) -> Vec<SlotRef> {
        let mut out = Vec::new();
        for l in locs {
            let Some((slot, region)) = self.root_slot(body, &l.root) else { continue };
            let path = match l.offset {
                Some(o) => path_at(self.m, &region, o, size),
                None => Vec::new(),
            };
            out.push(slot.with_path(path));
        }
        out
    }

    /// Slots an unbounded access through pointer operand `op` touches: the
    /// field a constant gep names, otherwise the whole slot unless the
    /// pointer is known to start inside a field.
    fn pointer_arg_slots(&self, body: &str, op: &Operand) -> Vec<SlotRef> {
        let Some(pts) = self.pts.get(body) else { return Vec::new() };
        let bf = self.function(body);
        let syntactic = match op {
            Operand::Local(name) => bf.and_then(|bf| {
                bf.instrs().find_map(|i| match &i.kind {
                    InstrKind::Gep { dest, base_ty, base, indices } if dest == name => {
                        let base_at_start =
                            pts.of_operand(base).iter().all(|l| l.offset == Some(0));
                        if base_at_start {
                            gep_path(self.m, base_ty, indices)
                        } else {
                            None
                        }
                    }
                    _ => None,
                })
            }),
            _ => None,
        };
        let mut out = Vec::new();
        for l in pts.of_operand(op) {
            let Some((slot, region)) = self.root_slot(body, &l.root) else { continue };
            let path = match (&syntactic, l.offset) {
                (Some(p), _) => p.clone(),
                (None, Some(o)) if o > 0 => path_at(self.m, &region, o, 1),
                _ => Vec::new(),
            };
            out.push(slot.with_path(path));
        }
        out
    }

    /// Call instruction operand behind an actual node.
    fn actual_arg(&self, body: &str, call: crate::ir::InstrId, k: u32) -> Option<Operand> {
        let bf = self.function(body)?;
        match &bf.instr(call)?.kind {
            InstrKind::Call { args, .. } => args.get(k as usize).cloned(),
            _ => None,
        }
    }

    fn field_children(&self, parent: NodeId) -> Vec<(NodeId, Vec<String>)> {
        self.g
            .successors(parent)
            .iter()
            .filter_map(|&(n, _)| match &self.g.node(n).kind {
                NodeKind::FieldNode { owner, path, .. } if *owner == parent => Some((n, path.clone())),
                _ => None,
            })
            .collect()
    }

    fn instr_of(&self, body: &str, n: NodeId) -> Option<&'a crate::ir::Instruction> {
        let id = self.g.node(n).kind.instr()?;
        self.function(body)?.instr(id)
    }

    fn is_prim_slot_type(ty: &Type) -> bool {
        ty.is_scalar() && (ty.is_prim() || !ty.is_pointer())
    }
}

/// Source nodes: primitive parameters and globals themselves; loads from
/// struct parameters and non-primitive globals, bound to the field read; and
/// actual-ins that pass such storage to a callee.
pub fn source_nodes(m: &Module, f: &Function, g: &Pdg) -> NodeBinding {
    let cx = Ctx::new(m, f, g);
    let mut b = NodeBinding::default();
    let struct_param = |i: u32| f.params.get(i as usize).is_some_and(|p| !Ctx::is_prim_slot_type(&p.ty));
    let struct_global = |name: &str| m.global(name).is_some_and(|gl| !Ctx::is_prim_slot_type(&gl.ty));

    for (i, p) in f.params.iter().enumerate() {
        if Ctx::is_prim_slot_type(&p.ty) {
            if let Some(n) = g.formal_in(i as u32) {
                b.add_source(n, SlotRef::param(i as u32, p.ty.clone()));
            }
        }
    }
    for n in &g.nodes {
        match &n.kind {
            NodeKind::GlobalValue { name, ty } if !struct_global(name) => {
                b.add_source(n.id, SlotRef::global(name.clone(), ty.clone()));
            }
            NodeKind::General { .. } => {
                let Some(ins) = cx.instr_of(&n.function, n.id) else { continue };
                let InstrKind::Load { ty, addr, .. } = &ins.kind else { continue };
                let Some(pts) = cx.pts.get(&n.function) else { continue };
                let Ok(size) = m.size_of(ty) else { continue };
                let locs = pts.of_operand(addr);
                for s in cx.access_slots(&n.function, &locs, size) {
                    let keep = match &s.kind {
                        super::SlotKind::Param(i) => struct_param(*i),
                        super::SlotKind::Global(gn) => struct_global(gn),
                        super::SlotKind::Ret => false,
                    };
                    if keep {
                        b.add_source(n.id, s);
                    }
                }
            }
            NodeKind::ActualIn { call, slot, .. } if n.function == f.name => {
                let slots: Vec<SlotRef> = match slot {
                    CallSlot::Arg(k) => match cx.actual_arg(&n.function, *call, *k) {
                        Some(op) => cx
                            .pointer_arg_slots(&n.function, &op)
                            .into_iter()
                            .filter(|s| match &s.kind {
                                super::SlotKind::Param(i) => struct_param(*i),
                                super::SlotKind::Global(gn) => struct_global(gn),
                                super::SlotKind::Ret => false,
                            })
                            .collect(),
                        None => Vec::new(),
                    },
                    CallSlot::Global(gn) if struct_global(gn) => {
                        let ty = m.global(gn).map(|x| x.ty.clone()).unwrap_or(Type::Void);
                        vec![SlotRef::global(gn.clone(), ty)]
                    }
                    _ => Vec::new(),
                };
                for s in slots {
                    for (child, path) in cx.field_children(n.id) {
                        let mut full = s.field_path.clone();
                        full.extend(path);
                        b.add_source(child, s.clone().with_path(full));
                    }
                    b.add_source(n.id, s);
                }
            }
            _ => {}
        }
    }
    b
}

/// Target nodes: returns, stores into parameter or global storage, and
/// actual-outs through which a callee writes such storage.
pub fn target_nodes(m: &Module, f: &Function, g: &Pdg) -> NodeBinding {
    let cx = Ctx::new(m, f, g);
    let mut b = NodeBinding::default();
    for n in &g.nodes {
        match &n.kind {
            NodeKind::Return { .. } if n.function == f.name => {
                b.add_target(n.id, SlotRef::ret(f.ret.clone()));
            }
            NodeKind::General { .. } => {
                let Some(ins) = cx.instr_of(&n.function, n.id) else { continue };
                let InstrKind::Store { ty, addr, .. } = &ins.kind else { continue };
                let Some(pts) = cx.pts.get(&n.function) else { continue };
                let Ok(size) = m.size_of(ty) else { continue };
                for s in cx.access_slots(&n.function, &pts.of_operand(addr), size) {
                    b.add_target(n.id, s);
                }
            }
            NodeKind::ActualOut { call, slot, may_write: true, .. } if n.function == f.name => {
                let slots = match slot {
                    CallSlot::Arg(k) => match cx.actual_arg(&n.function, *call, *k) {
                        Some(op) => cx.pointer_arg_slots(&n.function, &op),
                        None => Vec::new(),
                    },
                    CallSlot::Global(gn) => {
                        let ty = m.global(gn).map(|x| x.ty.clone()).unwrap_or(Type::Void);
                        vec![SlotRef::global(gn.clone(), ty)]
                    }
                    CallSlot::Ret => Vec::new(),
                };
                for s in slots {
                    for (child, path) in cx.field_children(n.id) {
                        let mut full = s.field_path.clone();
                        full.extend(path);
                        b.add_target(child, s.clone().with_path(full));
                    }
                    b.add_target(n.id, s);
                }
            }
            _ => {}
        }
    }
    b
}

/// Both halves of the binding.
pub fn bind(m: &Module, f: &Function, g: &Pdg) -> NodeBinding {
    source_nodes(m, f, g).merge(target_nodes(m, f, g))
}
