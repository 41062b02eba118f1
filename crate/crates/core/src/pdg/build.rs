use std::collections::{BTreeMap, HashMap};

use super::alias::{may_alias, may_alias_across, AbsLoc, PointsTo, Root};
use super::cfg::{control_dependences, Cfg};
use super::{CallSlot, EdgeKind, NodeId, NodeKind, Pdg, PdgError};
use crate::ir::{Function, InstrKind, Module, Operand, Type};
use crate::summarize::{SlotKind, Summary};

const UNBOUNDED: u64 = u64::MAX;

#[derive(Debug, Clone)]
struct BodyInfo {
    entry: NodeId,
    formal_in: Vec<NodeId>,
    formal_out: Vec<Option<NodeId>>,
    returns: Vec<NodeId>,
}

#[derive(Debug, Clone)]
struct Access {
    body: usize,
    node: NodeId,
    locs: Vec<AbsLoc>,
    size: u64,
    write: bool,
}

struct Builder<'a> {
    m: &'a Module,
    summaries: &'a BTreeMap<String, Summary>,
    g: Pdg,
    globals: BTreeMap<String, NodeId>,
    bodies: HashMap<String, BodyInfo>,
    stack: Vec<String>,
    accesses: Vec<Access>,
    next_body: usize,
    field_nodes: HashMap<(NodeId, Vec<String>), NodeId>,
}

/// Builds the dependency graph of `f`. Calls to functions in `summaries` are
/// represented by summary edges; other defined callees are included.
pub fn build_pdg(
    m: &Module,
    f: &Function,
    summaries: &BTreeMap<String, Summary>,
) -> Result<Pdg, PdgError> {
    let mut b = Builder {
        m,
        summaries,
        g: Pdg::new(f.name.clone()),
        globals: BTreeMap::new(),
        bodies: HashMap::new(),
        stack: Vec::new(),
        accesses: Vec::new(),
        next_body: 0,
        field_nodes: HashMap::new(),
    };
    b.body(f)?;
    b.raw_edges();
    Ok(b.g)
}

impl<'a> Builder<'a> {
    fn global_node(&mut self, name: &str) -> NodeId {
        if let Some(&n) = self.globals.get(name) {
            return n;
        }
        let ty = self.m.global(name).map(|g| g.ty.clone()).unwrap_or(Type::Void);
        let owner = self.g.function.clone();
        let n = self.g.add_node(&owner, NodeKind::GlobalValue { name: name.to_string(), ty }, None);
        self.globals.insert(name.to_string(), n);
        n
    }

    fn field_node(
        &mut self,
        func: &str,
        parent: NodeId,
        param_index: Option<u32>,
        path: &[String],
        owner_ty: &Type,
    ) -> Result<(NodeId, u64, u64), PdgError> {
        let layout = self.m.layout();
        let (off, fty) = layout.resolve_path(owner_ty, path)?;
        let size = layout.size_of(&fty)?;
        if let Some(&n) = self.field_nodes.get(&(parent, path.to_vec())) {
            return Ok((n, off, size));
        }
        let field_index = path
            .last()
            .and_then(|last| {
                let (_, parent_ty) =
                    layout.resolve_path(owner_ty, &path[..path.len() - 1]).ok()?;
                let agg = parent_ty.aggregate_name()?.to_string();
                self.m.aggregate_decl(&agg)?.field(last).map(|(i, _)| i as u32)
            })
            .unwrap_or(0);
        let n = self.g.add_node(
            func,
            NodeKind::FieldNode { owner: parent, param_index, field_index, path: path.to_vec(), ty: fty },
            None,
        );
        self.g.add_edge(parent, n, EdgeKind::Pfld);
        self.field_nodes.insert((parent, path.to_vec()), n);
        Ok((n, off, size))
    }

    fn body(&mut self, f: &'a Function) -> Result<BodyInfo, PdgError> {
        if let Some(pos) = self.stack.iter().position(|s| s == &f.name) {
            let mut cycle = self.stack[pos..].to_vec();
            cycle.push(f.name.clone());
            return Err(PdgError::Recursion(cycle));
        }
        if let Some(info) = self.bodies.get(&f.name) {
            return Ok(info.clone());
        }
        self.stack.push(f.name.clone());
        let body = self.next_body;
        self.next_body += 1;
        let is_root = self.stack.len() == 1;
        let fname = f.name.as_str();
        let m = self.m;

        let entry = self.g.add_node(fname, NodeKind::Entry { function: f.name.clone() }, None);
        let mut formal_in = Vec::new();
        let mut formal_out = Vec::new();
        for (i, p) in f.params.iter().enumerate() {
            let i = i as u32;
            let fi = self.g.add_node(fname, NodeKind::FormalIn { index: i, ty: p.ty.clone() }, None);
            self.g.add_edge(entry, fi, EdgeKind::Pform);
            self.g.add_edge(entry, fi, EdgeKind::Cdep);
            formal_in.push(fi);
            if p.ty.is_pointer() {
                let fo = self.g.add_node(fname, NodeKind::FormalOut { index: i, ty: p.ty.clone() }, None);
                self.g.add_edge(fi, fo, EdgeKind::Pform);
                self.g.add_edge(entry, fo, EdgeKind::Cdep);
                self.accesses.push(Access {
                    body,
                    node: fo,
                    locs: vec![AbsLoc::new(Root::Param(i), None)],
                    size: UNBOUNDED,
                    write: false,
                });
                if let Some(agg) = p.ty.pointee().and_then(|t| t.aggregate_name()) {
                    let decl = m.aggregate_decl(agg).cloned();
                    let pointee = p.ty.pointee().cloned().unwrap_or(Type::Void);
                    for fld in decl.iter().flat_map(|d| d.fields.iter()) {
                        let path = vec![fld.name.clone()];
                        self.field_node(fname, fi, Some(i), &path, &pointee)?;
                        self.field_node(fname, fo, Some(i), &path, &pointee)?;
                    }
                }
                formal_out.push(Some(fo));
            } else {
                formal_out.push(None);
            }
        }

        let pts = PointsTo::analyze(m, f);
        let mut instr_nodes = Vec::new();
        let mut returns = Vec::new();
        for ins in f.instrs() {
            let kind = match &ins.kind {
                InstrKind::Call { callee, .. } => NodeKind::CallSite { callee: callee.clone(), instr: ins.id },
                InstrKind::Ret { .. } => NodeKind::Return { instr: ins.id },
                _ => NodeKind::General { instr: ins.id },
            };
            let n = self.g.add_node(fname, kind, Some(ins.to_string()));
            if is_root {
                self.g.instr_index.insert(ins.id, n);
            } else {
                self.g.callee_instr_index.insert((f.name.clone(), ins.id), n);
            }
            if matches!(ins.kind, InstrKind::Ret { .. }) {
                returns.push(n);
            }
            instr_nodes.push(n);
        }

        let mut defs: HashMap<&str, NodeId> = HashMap::new();
        for (i, p) in f.params.iter().enumerate() {
            defs.insert(p.name.as_str(), formal_in[i]);
        }
        // Actual nodes per call instruction, keyed by position in `instr_nodes`.
        let mut actual_in_of: HashMap<usize, Vec<NodeId>> = HashMap::new();
        for (pos, ins) in f.instrs().enumerate() {
            let node = instr_nodes[pos];
            match &ins.kind {
                InstrKind::Call { dest, callee, args } => {
                    let (ains, ret_out) = self.call_site(f, body, node, ins.id, callee, args, &pts)?;
                    actual_in_of.insert(pos, ains);
                    if let (Some(d), Some(r)) = (dest, ret_out) {
                        defs.insert(d.as_str(), r);
                    }
                }
                _ => {
                    if let Some(d) = ins.dest() {
                        defs.insert(d, node);
                    }
                }
            }
        }

        for (pos, ins) in f.instrs().enumerate() {
            let node = instr_nodes[pos];
            let ops = ins.operands();
            for (k, op) in ops.iter().enumerate() {
                let src = match op {
                    Operand::Local(n) => match defs.get(n.as_str()) {
                        Some(&s) => s,
                        None => continue,
                    },
                    Operand::Global(g) => self.global_node(g),
                    Operand::Const(_) => continue,
                };
                match &ins.kind {
                    InstrKind::Call { .. } => {
                        let dst = actual_in_of[&pos][k];
                        self.g.add_edge(src, dst, EdgeKind::DefUse);
                    }
                    InstrKind::Gep { .. } | InstrKind::BinOp { .. } => {
                        self.g.add_edge(src, node, EdgeKind::Dgnrl)
                    }
                    _ => self.g.add_edge(src, node, EdgeKind::DefUse),
                }
            }
            match &ins.kind {
                InstrKind::Load { ty, addr, .. } | InstrKind::Store { ty, addr, .. } => {
                    let size = m.size_of(ty)?;
                    self.accesses.push(Access {
                        body,
                        node,
                        locs: pts.of_operand(addr).into_iter().collect(),
                        size,
                        write: matches!(ins.kind, InstrKind::Store { .. }),
                    });
                }
                _ => {}
            }
        }

        // Address-valued nodes whose targets may overlap.
        let mut addr_nodes: Vec<(NodeId, Vec<AbsLoc>)> = Vec::new();
        for (i, p) in f.params.iter().enumerate() {
            if p.ty.is_pointer() {
                addr_nodes.push((formal_in[i], pts.of_operand(&Operand::Local(p.name.clone())).into_iter().collect()));
            }
        }
        for (pos, ins) in f.instrs().enumerate() {
            if let Some(d) = ins.dest() {
                if let Some(set) = pts.of_temp(d) {
                    let n = defs.get(d).copied().unwrap_or(instr_nodes[pos]);
                    addr_nodes.push((n, set.iter().cloned().collect()));
                }
            }
        }
        for a in 0..addr_nodes.len() {
            for b in a + 1..addr_nodes.len() {
                let hit = addr_nodes[a]
                    .1
                    .iter()
                    .any(|x| addr_nodes[b].1.iter().any(|y| may_alias(x, 1, y, 1)));
                if hit {
                    let (x, y) = (addr_nodes[a].0, addr_nodes[b].0);
                    let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                    self.g.add_edge(lo, hi, EdgeKind::Dalias);
                }
            }
        }

        let cfg = Cfg::new(f);
        let deps = control_dependences(&cfg);
        let mut pos = 0;
        let mut block_nodes: Vec<Vec<NodeId>> = Vec::new();
        for blk in &f.blocks {
            block_nodes.push(instr_nodes[pos..pos + blk.instrs.len()].to_vec());
            pos += blk.instrs.len();
        }
        for (bi, controllers) in deps.iter().enumerate() {
            if controllers.is_empty() {
                for &n in &block_nodes[bi] {
                    self.g.add_edge(entry, n, EdgeKind::Cdep);
                }
                continue;
            }
            for &a in controllers {
                let Some(&br) = block_nodes[a].last() else { continue };
                for &n in &block_nodes[bi] {
                    self.g.add_edge(br, n, EdgeKind::Cdep);
                }
            }
        }

        let info = BodyInfo { entry, formal_in, formal_out, returns };
        self.stack.pop();
        if !is_root {
            self.g.inlined.push(f.name.clone());
        }
        self.bodies.insert(f.name.clone(), info.clone());
        Ok(info)
    }

    /// Creates the actual nodes of one call and wires them to the callee.
    /// Returns the actual-in node per argument and the return actual-out.
    #[allow(clippy::too_many_arguments)]
    fn call_site(
        &mut self,
        f: &'a Function,
        body: usize,
        call_node: NodeId,
        call: crate::ir::InstrId,
        callee: &str,
        args: &[Operand],
        pts: &PointsTo,
    ) -> Result<(Vec<NodeId>, Option<NodeId>), PdgError> {
        let m = self.m;
        let fname = f.name.as_str();
        let summary = self.summaries.get(callee).filter(|_| callee != f.name);
        let callee_fn = m.function(callee);
        if summary.is_none() && callee_fn.is_none() {
            return Err(PdgError::UnresolvedCallee { caller: f.name.clone(), callee: callee.to_string() });
        }
        let slot_type = |k: u32| -> Type {
            if let Some(cf) = callee_fn {
                if let Some(p) = cf.params.get(k as usize) {
                    return p.ty.clone();
                }
            }
            summary
                .and_then(|s| {
                    s.entries
                        .iter()
                        .flat_map(|e| std::iter::once(&e.out).chain(e.ins.iter()))
                        .find(|sl| sl.kind == SlotKind::Param(k))
                        .map(|sl| sl.ty.clone())
                })
                .unwrap_or_else(Type::i64)
        };
        let ret_ty = callee_fn
            .map(|c| c.ret.clone())
            .or_else(|| {
                summary.and_then(|s| {
                    s.entries.iter().find(|e| e.out.kind == SlotKind::Ret).map(|e| e.out.ty.clone())
                })
            })
            .unwrap_or(Type::Void);

        let writes_arg = |k: u32| -> bool {
            match summary {
                Some(s) => s.entries.iter().any(|e| e.out.kind == SlotKind::Param(k)),
                None => true,
            }
        };

        let mut ains = Vec::new();
        let mut aouts: Vec<Option<NodeId>> = Vec::new();
        for (k, arg) in args.iter().enumerate() {
            let k32 = k as u32;
            let ty = slot_type(k32);
            let ai = self.g.add_node(fname, NodeKind::ActualIn { call, slot: CallSlot::Arg(k32), ty: ty.clone() }, None);
            self.g.add_edge(call_node, ai, EdgeKind::Pact);
            self.g.add_edge(call_node, ai, EdgeKind::Cdep);
            ains.push(ai);
            let locs: Vec<AbsLoc> = pts.of_operand(arg).into_iter().collect();
            if ty.is_pointer() {
                self.accesses.push(Access { body, node: ai, locs: locs.clone(), size: UNBOUNDED, write: false });
                let may_write = writes_arg(k32);
                let ao = self.g.add_node(
                    fname,
                    NodeKind::ActualOut { call, slot: CallSlot::Arg(k32), ty, may_write },
                    None,
                );
                self.g.add_edge(call_node, ao, EdgeKind::Pact);
                self.g.add_edge(call_node, ao, EdgeKind::Cdep);
                let whole = match summary {
                    Some(s) => s
                        .entries
                        .iter()
                        .any(|e| e.out.kind == SlotKind::Param(k32) && e.out.field_path.is_empty()),
                    None => true,
                };
                if whole {
                    self.accesses.push(Access { body, node: ao, locs, size: UNBOUNDED, write: true });
                }
                aouts.push(Some(ao));
            } else {
                aouts.push(None);
            }
        }
        let ret_out = if ret_ty != Type::Void {
            let ro = self.g.add_node(
                fname,
                NodeKind::ActualOut { call, slot: CallSlot::Ret, ty: ret_ty.clone(), may_write: true },
                None,
            );
            self.g.add_edge(call_node, ro, EdgeKind::Cdep);
            Some(ro)
        } else {
            None
        };

        if let Some(s) = summary {
            let mut gin: BTreeMap<String, NodeId> = BTreeMap::new();
            let mut gout: BTreeMap<String, NodeId> = BTreeMap::new();
            for e in &s.entries {
                for slot in std::iter::once(&e.out).chain(e.ins.iter()) {
                    let SlotKind::Global(gname) = &slot.kind else { continue };
                    let is_out = std::ptr::eq(slot, &e.out);
                    let gty = m.global(gname).map(|g| g.ty.clone()).unwrap_or_else(|| slot.ty.clone());
                    let map = if is_out { &mut gout } else { &mut gin };
                    if map.contains_key(gname) {
                        continue;
                    }
                    let n = if is_out {
                        let n = self.g.add_node(
                            fname,
                            NodeKind::ActualOut { call, slot: CallSlot::Global(gname.clone()), ty: gty, may_write: true },
                            None,
                        );
                        let whole = s.entries.iter().any(|x| {
                            x.out.kind == SlotKind::Global(gname.clone()) && x.out.field_path.is_empty()
                        });
                        if whole {
                            self.accesses.push(Access {
                                body,
                                node: n,
                                locs: vec![AbsLoc::new(Root::Global(gname.clone()), Some(0))],
                                size: UNBOUNDED,
                                write: true,
                            });
                        }
                        n
                    } else {
                        let n = self.g.add_node(
                            fname,
                            NodeKind::ActualIn { call, slot: CallSlot::Global(gname.clone()), ty: gty },
                            None,
                        );
                        let gv = self.global_node(gname);
                        self.g.add_edge(gv, n, EdgeKind::DefUse);
                        self.g.add_edge(call_node, n, EdgeKind::Pact);
                        self.accesses.push(Access {
                            body,
                            node: n,
                            locs: vec![AbsLoc::new(Root::Global(gname.clone()), Some(0))],
                            size: UNBOUNDED,
                            write: false,
                        });
                        n
                    };
                    self.g.add_edge(call_node, n, EdgeKind::Cdep);
                    map.insert(gname.clone(), n);
                }
            }
            for e in &s.entries {
                let out_node = match &e.out.kind {
                    SlotKind::Param(k) => {
                        let Some(Some(ao)) = aouts.get(*k as usize).copied() else { continue };
                        if e.out.field_path.is_empty() {
                            ao
                        } else {
                            let owner_ty = e.out.ty.pointee().cloned().unwrap_or(Type::Void);
                            let (n, off, size) = self.field_node(fname, ao, Some(*k), &e.out.field_path, &owner_ty)?;
                            let base: Vec<AbsLoc> = pts.of_operand(&args[*k as usize]).into_iter().collect();
                            let locs = base
                                .into_iter()
                                .map(|l| AbsLoc { offset: l.offset.map(|o| o + off), root: l.root })
                                .collect();
                            self.push_access_once(Access { body, node: n, locs, size, write: true });
                            n
                        }
                    }
                    SlotKind::Global(gname) => {
                        let ao = gout[gname];
                        if e.out.field_path.is_empty() {
                            ao
                        } else {
                            let gty = m.global(gname).map(|g| g.ty.clone()).unwrap_or_else(|| e.out.ty.clone());
                            let (n, off, size) = self.field_node(fname, ao, None, &e.out.field_path, &gty)?;
                            self.push_access_once(Access {
                                body,
                                node: n,
                                locs: vec![AbsLoc::new(Root::Global(gname.clone()), Some(off))],
                                size,
                                write: true,
                            });
                            n
                        }
                    }
                    SlotKind::Ret => match ret_out {
                        Some(r) => r,
                        None => continue,
                    },
                };
                for inp in &e.ins {
                    let in_node = match &inp.kind {
                        SlotKind::Param(k) => {
                            let Some(&ai) = ains.get(*k as usize) else { continue };
                            if inp.field_path.is_empty() {
                                ai
                            } else {
                                let owner_ty = inp.ty.pointee().cloned().unwrap_or(Type::Void);
                                self.field_node(fname, ai, Some(*k), &inp.field_path, &owner_ty)?.0
                            }
                        }
                        SlotKind::Global(gname) => {
                            let ai = gin[gname];
                            if inp.field_path.is_empty() {
                                ai
                            } else {
                                let gty = m.global(gname).map(|g| g.ty.clone()).unwrap_or_else(|| inp.ty.clone());
                                self.field_node(fname, ai, None, &inp.field_path, &gty)?.0
                            }
                        }
                        SlotKind::Ret => continue,
                    };
                    self.g.add_edge(in_node, out_node, EdgeKind::Summary);
                }
            }
        } else {
            let cf = callee_fn.expect("checked above");
            let info = self.body(cf)?;
            self.g.add_edge(call_node, info.entry, EdgeKind::Call);
            for (k, &ai) in ains.iter().enumerate() {
                if let Some(&fi) = info.formal_in.get(k) {
                    self.g.add_edge(ai, fi, EdgeKind::Pin);
                }
                if let (Some(Some(ao)), Some(Some(fo))) = (aouts.get(k), info.formal_out.get(k)) {
                    self.g.add_edge(*fo, *ao, EdgeKind::Pout);
                }
            }
            if let Some(ro) = ret_out {
                for &r in &info.returns {
                    self.g.add_edge(r, ro, EdgeKind::Pout);
                }
            }
        }
        Ok((ains, ret_out))
    }

    fn push_access_once(&mut self, a: Access) {
        if !self.accesses.iter().any(|x| x.node == a.node && x.write == a.write) {
            self.accesses.push(a);
        }
    }

    fn raw_edges(&mut self) {
        let writers: Vec<&Access> = self.accesses.iter().filter(|a| a.write).collect();
        let readers: Vec<&Access> = self.accesses.iter().filter(|a| !a.write).collect();
        let mut edges = Vec::new();
        for w in &writers {
            for r in &readers {
                if w.node == r.node {
                    continue;
                }
                let hit = w.locs.iter().any(|x| {
                    r.locs.iter().any(|y| {
                        if w.body == r.body {
                            may_alias(x, w.size, y, r.size)
                        } else {
                            may_alias_across(x, w.size, y, r.size)
                        }
                    })
                });
                if hit {
                    edges.push((w.node, r.node));
                }
            }
        }
        for (s, d) in edges {
            self.g.add_edge(s, d, EdgeKind::Raw);
        }
    }
}
